"""Synthetic domain datasets (tourism, bird migration, highway traffic).

Each dataset is generated deterministically from a seed and can be written
to disk in the pipeline's input formats together with a config file.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .enrichment import EventOfInterest, PointOfInterest, SocialPost
from .geo import GeoPoint, Polygon, haversine_distance
from .etl import format_timestamp

M_PER_DEG = math.pi * 6_371_000.0 / 180.0

# lon/lat corners of the Recife study region used by the tourism queries
RECIFE_REGION_WKT = ("POLYGON((-34.954449 -8.124354, -34.904449 -8.124354, "
                     "-34.904449 -8.084354, -34.954449 -8.084354, -34.954449 -8.124354))")


def offset(p: GeoPoint, east_m: float, north_m: float) -> GeoPoint:
    return GeoPoint(lat=p.lat + north_m / M_PER_DEG,
                    lon=p.lon + east_m / (M_PER_DEG * math.cos(math.radians(p.lat))))


def square(center: GeoPoint, half_m: float) -> Polygon:
    corners = [offset(center, dx, dy) for dx, dy in
               ((-half_m, -half_m), (half_m, -half_m), (half_m, half_m), (-half_m, half_m))]
    return Polygon(tuple(corners + corners[:1]))


def rectangle(a: GeoPoint, b: GeoPoint, half_width_m: float) -> Polygon:
    """Axis-aligned box around the segment a-b, padded by ``half_width_m``."""
    lo = GeoPoint(lat=min(a.lat, b.lat), lon=min(a.lon, b.lon))
    hi = GeoPoint(lat=max(a.lat, b.lat), lon=max(a.lon, b.lon))
    lo, hi = offset(lo, -half_width_m, -half_width_m), offset(hi, half_width_m, half_width_m)
    ring = (lo, GeoPoint(lat=lo.lat, lon=hi.lon), hi, GeoPoint(lat=hi.lat, lon=lo.lon), lo)
    return Polygon(ring)


@dataclass
class Dataset:
    name: str
    profile: str
    hemisphere: str
    points: list[tuple[str, str, datetime, float, float]] = field(default_factory=list)
    pois: list[PointOfInterest] = field(default_factory=list)
    events: list[EventOfInterest] = field(default_factory=list)
    posts: list[SocialPost] = field(default_factory=list)
    goal_rules: list[str] = field(default_factory=list)
    eps_meters: float = 50.0
    min_stop_duration_s: float = 300.0

    def poi(self, name: str) -> PointOfInterest:
        return next(p for p in self.pois if p.object_name == name)


class _Walker:
    """Emits timestamped GPS samples for a scripted itinerary."""

    def __init__(self, ds: Dataset, traj_id: str, object_id: str, start: datetime,
                 where: GeoPoint, rng: random.Random, jitter_m: float):
        self.ds, self.traj_id, self.object_id = ds, traj_id, object_id
        self.t, self.p, self.rng, self.jitter = start, where, rng, jitter_m

    def _emit(self, p: GeoPoint):
        self.ds.points.append((self.traj_id, self.object_id, self.t, p.lat, p.lon))

    def stay(self, minutes: float, step_s: int = 60):
        for k in range(int(minutes * 60 // step_s) + 1):
            if k:
                self.t += timedelta(seconds=step_s)
            j = self.jitter
            self._emit(offset(self.p, self.rng.uniform(-j, j), self.rng.uniform(-j, j)))

    def go(self, dest: GeoPoint, speed_mps: float, step_s: int):
        dist = haversine_distance(self.p, dest)
        n = max(1, math.ceil(dist / (speed_mps * step_s)))
        leg_s = max(1, round(dist / speed_mps / n))
        for k in range(1, n + 1):
            f = k / n
            self.t += timedelta(seconds=leg_s)
            q = GeoPoint(lat=self.p.lat + f * (dest.lat - self.p.lat),
                         lon=self.p.lon + f * (dest.lon - self.p.lon))
            if k < n:
                self._emit(q)
        self.p = dest
        self.t += timedelta(seconds=step_s)


def _utc(*args) -> datetime:
    return datetime(*args, tzinfo=timezone.utc)


def _geo_attrs(city: str, district: str, **extra) -> dict:
    base = {"continent": "South America", "country": "Brazil", "state_province": "Pernambuco",
            "region": "Northeast", "city": city, "district": district}
    base.update(extra)
    return base


def tourism_dataset(seed: int = 0) -> Dataset:
    """Tourists in Recife/Olinda moving by bus, on foot and by bicycle."""
    rng = random.Random(seed)
    ds = Dataset("tourism", "tourism", "South")
    places = {
        "Boa Vista Hotel": (GeoPoint(-8.118, -34.945), "Hotel", "Lodging and rest", "Boa Vista",
                            "Reception Lounge"),
        "Central Park": (GeoPoint(-8.110, -34.930), "Park", "Leisure in green space", "Santo Antonio",
                         "Open Air Stage"),
        "Harbour Viewpoint": (GeoPoint(-8.106, -34.925), "Viewpoint", "Scenic photography",
                              "Recife Antigo", "Observation Deck"),
        "City Museum": (GeoPoint(-8.100, -34.920), "Museum", "History of the city and its people",
                        "Recife Antigo", "Archival Item"),
        "Marco Zero Restaurant": (GeoPoint(-8.092, -34.910), "Restaurant", "Regional cuisine",
                                  "Recife Antigo", "Dining Hall"),
        "Olinda Cathedral": (GeoPoint(-8.013, -34.855), "Castle", "Colonial religious heritage",
                             "Alto da Se", "Baroque Altar"),
        "Olinda Market": (GeoPoint(-8.010, -34.850), "Market", "Local crafts", "Carmo",
                          "Craft Stall"),
    }
    for k, (name, (center, cat, purpose, district, activity)) in enumerate(sorted(places.items())):
        city = "Olinda" if name.startswith("Olinda") else "Recife"
        ds.pois.append(PointOfInterest(
            poi_id=f"poi_{k + 1:02d}", footprint=square(center, 80.0), object_name=name,
            object_category=cat, allows_stop=True, allows_move=False, semantic_purpose=purpose,
            landmark_attrs=_geo_attrs(city, district, geo_object_name="Land Surface",
                                      activity_object_name=activity)))
    park, museum = ds.poi("Central Park"), ds.poi("City Museum")
    olinda = Polygon(tuple(offset(GeoPoint(-8.0115, -34.8525), dx, dy) for dx, dy in
                           ((-600, -600), (600, -600), (600, 600), (-600, 600), (-600, -600))))
    for year in (2013, 2014, 2015):
        ds.events += [
            EventOfInterest(f"ev_festival_{year}", park.footprint, "Festival",
                            "Entertainment at Concert", _utc(year, 1, 5), _utc(year, 1, 25),
                            ("Musical Shows", "Party"), "Cloud Overcast", "scattered clouds"),
            EventOfInterest(f"ev_exhibition_{year}", museum.footprint, "Exhibition",
                            "Scientific Interest at Museum", _utc(year, 1, 1), _utc(year, 12, 31),
                            ("Guided Tour",), "Temperature", "indoor 22C"),
            EventOfInterest(f"ev_carnival_{year}", olinda, "Carnival", "Street Celebration",
                            _utc(year, 1, 10), _utc(year, 2, 20), ("Parade", "Frevo Dance"),
                            "Rain Precipitation", "light showers"),
        ]
    ds.goal_rules = [
        "# object_category,event_item_name,goal",
        "Park,,central park",
        "Park,Festival,central park",
        "Viewpoint,,pictures",
        "Restaurant,,lunch",
        "Hotel,,rest",
        "Museum,Exhibition,Scientific Interest at Museum",
        "Castle,Carnival,Entertainment at Carnival",
        "Market,Carnival,shopping",
    ]
    # (tourist, date, itinerary)
    trips = []
    for n in range(6):
        for year in (2013, 2014, 2015):
            if (n + year) % 2:
                continue
            month, day = ((1, 12 + n) if (n + year) % 4 else (7, 8 + n))
            trips.append((f"tourist_{n + 1}", _utc(year, month, day, 9, rng.randrange(0, 50)),
                          "olinda" if n == 5 else "recife"))
    for k, (who, start, plan) in enumerate(trips):
        traj_id = f"tour_{k + 1:03d}"
        hotel = ds.poi("Boa Vista Hotel").footprint
        w = _Walker(ds, traj_id, who, start, _center(hotel), rng, jitter_m=8.0)
        w.stay(15)
        if plan == "recife":
            w.go(_center(park.footprint), 12.0, 30)                      # metro bus
            w.stay(40)
            w.go(_center(ds.poi("Harbour Viewpoint").footprint), 1.2, 30)  # on foot
            w.stay(12)
            w.go(_center(museum.footprint), 1.2, 30)
            w.stay(30)
            w.go(_center(ds.poi("Marco Zero Restaurant").footprint), 4.5, 30)  # bicycle
            w.stay(45)
        else:
            w.go(_center(ds.poi("Olinda Cathedral").footprint), 12.0, 30)
            w.stay(35)
            w.go(_center(ds.poi("Olinda Market").footprint), 1.2, 30)
            w.stay(40)
        ts = [p[2] for p in ds.points if p[0] == traj_id]
        mid = ts[len(ts) // 3]
        ds.posts.append(SocialPost(f"post_{k + 1:03d}a", who, mid, "picture-based", "Instagram",
                                   "image", "view from the park", "positive", "happy"))
        ds.posts.append(SocialPost(f"post_{k + 1:03d}b", who, ts[-2], "tweet-based", "Twitter",
                                   "textual", "long queue for lunch", "negative", "upset"))
    ds.posts.append(SocialPost("post_orphan", "tourist_1", _utc(2012, 1, 1), "generic",
                               "Facebook", "textual", "planning a trip", "indifferent", "anxious"))
    return ds


def _center(poly: Polygon) -> GeoPoint:
    ring = poly.exterior[:-1]
    return GeoPoint(lat=sum(p.lat for p in ring) / len(ring), lon=sum(p.lon for p in ring) / len(ring))


def birds_dataset(seed: int = 0) -> Dataset:
    """White storks commuting between a nest, a feeding valley and a roosting tree."""
    rng = random.Random(seed)
    ds = Dataset("birds", "birds", "North", min_stop_duration_s=600.0)
    sites = {
        "Mountain Nest": (GeoPoint(39.80, -5.90), "Mountain", "Covering and housing", "Bird Nest"),
        "Green Valley": (GeoPoint(39.75, -5.80), "Valley", "Food source", "Insect Meadow"),
        "Old Oak Tree": (GeoPoint(39.82, -5.70), "Tree", "Roosting shade", "Branch Roost"),
    }
    for k, (name, (center, cat, purpose, activity)) in enumerate(sorted(sites.items())):
        ds.pois.append(PointOfInterest(
            f"site_{k + 1}", square(center, 300.0), name, cat, True, False, purpose,
            {"continent": "Europe", "country": "Spain", "state_province": "Extremadura",
             "region": "Caceres", "city": "Monfrague", "district": name,
             "geo_object_name": cat, "activity_object_name": activity}))
    valley, tree = ds.poi("Green Valley"), ds.poi("Old Oak Tree")
    for year in (2014, 2015):
        ds.events += [
            EventOfInterest(f"feed_{year}", valley.footprint, "Feeding", "Food Availability",
                            _utc(year, 9, 1), _utc(year, 10, 31),
                            ("Consecutive picking of seeds and insects",), "Wind Direction",
                            "north-easterly 5 m/s"),
            EventOfInterest(f"rest_{year}", tree.footprint, "Resting",
                            "Environmental Conditions for Breeding", _utc(year, 9, 1),
                            _utc(year, 10, 31), ("Sitting",), "Rain Precipitation", "12 mm/day"),
        ]
    ds.goal_rules = [
        "Valley,Feeding,Food Availability",
        "Tree,Resting,Environmental Conditions for Breeding",
        "Mountain,,Breeding",
    ]
    k = 0
    for bird in ("stork_A", "stork_B", "stork_C", "stork_D"):
        for year, month in ((2014, 9), (2015, 10), (2015, 4)):
            k += 1
            traj_id = f"flight_{k:03d}"
            w = _Walker(ds, traj_id, bird, _utc(year, month, 3 + k, 6, rng.randrange(60)),
                        _center(ds.poi("Mountain Nest").footprint), rng, jitter_m=12.0)
            w.stay(60)
            w.go(_center(valley.footprint), rng.uniform(9.0, 15.0), 60)
            w.stay(45)
            w.go(_center(tree.footprint), rng.uniform(9.0, 15.0), 60)
            w.stay(30)
            w.go(_center(ds.poi("Mountain Nest").footprint), rng.uniform(9.0, 15.0), 60)
            w.stay(20)
    return ds


def traffic_dataset(seed: int = 0) -> Dataset:
    """Cars on a highway with interchanges, slowed down by road events."""
    rng = random.Random(seed)
    ds = Dataset("traffic", "traffic", "North", eps_meters=40.0, min_stop_duration_s=240.0)
    origin = GeoPoint(45.0, 7.60)
    nodes = [offset(origin, 3000.0 * i, 0.0) for i in range(4)]
    attrs = {"continent": "Europe", "country": "Italy", "state_province": "Piedmont",
             "region": "Turin", "city": "Turin"}
    for i, node in enumerate(nodes):
        ds.pois.append(PointOfInterest(
            f"ic_{i + 1}", square(node, 120.0), f"Interchange {i + 1}", "Highway Interchange",
            True, False, "Traffic junction", {**attrs, "district": f"Exit {i + 1}",
                                               "geo_object_name": "Road"}))
    names = ["Bridge Span", "Steep Grade", "Carnival Boulevard"]
    for i, name in enumerate(names):
        a, b = offset(nodes[i], 200.0, 0.0), offset(nodes[i + 1], -200.0, 0.0)
        ds.pois.append(PointOfInterest(
            f"seg_{i + 1}", rectangle(a, b, 60.0), name, "Highway Segment", False, True,
            "Through traffic", {**attrs, "district": f"Segment {i + 1}",
                                "geo_object_name": "Road", "activity_object_name": "Bridge"
                                if i == 0 else "Lane"}))
    seg = {p.object_name: p for p in ds.pois}
    ds.events = [
        EventOfInterest("bridge_repair_2011", seg["Bridge Span"].footprint, "Bridge Repair",
                        "Monitor Accident Occurrences", _utc(2011, 3, 1), _utc(2011, 9, 30),
                        ("Slow Acceleration",), "Fog Concentration", "dense morning fog"),
        EventOfInterest("bridge_repair_2014", seg["Bridge Span"].footprint, "Bridge Repair",
                        "Monitor Accident Occurrences", _utc(2014, 5, 1), _utc(2014, 8, 31),
                        ("Slow Acceleration",), "Rain Precipitation", "heavy showers"),
        EventOfInterest("steep_slope", seg["Steep Grade"].footprint, "Steep Slope",
                        "Speed Limit Observance", _utc(2009, 1, 1), _utc(2016, 12, 31),
                        ("Negotiating Curves",), "Snow Fall", "icy surface"),
        EventOfInterest("street_carnival_2012", seg["Carnival Boulevard"].footprint,
                        "Street Carnival", "Monitor Accident Occurrences", _utc(2012, 2, 10),
                        _utc(2012, 2, 25), ("Interaction with Celebrator",), "Rain Precipitation",
                        "drizzle"),
    ]
    ds.goal_rules = [
        "Highway Segment,Bridge Repair,Monitor Accident Occurrences",
        "Highway Segment,Steep Slope,Speed Limit Observance",
        "Highway Segment,Street Carnival,Monitor Accident Occurrences",
        "Highway Interchange,,Toll and Junction Passage",
    ]
    starts = [_utc(2009, 11, 4, 7), _utc(2011, 6, 14, 8), _utc(2011, 12, 1, 17),
              _utc(2012, 2, 15, 9), _utc(2013, 3, 3, 10), _utc(2014, 6, 20, 8),
              _utc(2015, 1, 9, 18), _utc(2015, 7, 7, 12), _utc(2016, 5, 5, 6),
              _utc(2012, 8, 8, 16)]
    for k, start in enumerate(starts):
        traj_id = f"drive_{k + 1:03d}"
        w = _Walker(ds, traj_id, f"car_{k % 4 + 1}", start + timedelta(minutes=rng.randrange(30)),
                    nodes[0], rng, jitter_m=5.0)
        w.stay(6, step_s=30)
        for i, name in enumerate(names):
            active = any(ev.footprint == seg[name].footprint and ev.t_start <= w.t <= ev.t_end
                         for ev in ds.events)
            speed = rng.uniform(5.0, 7.5) if active else rng.uniform(20.0, 28.0)
            w.go(nodes[i + 1], speed, 15)
            w.stay(5, step_s=30)
    return ds


DATASETS = {"tourism": tourism_dataset, "birds": birds_dataset, "traffic": traffic_dataset}


def write_dataset(ds: Dataset, directory: str | Path) -> Path:
    """Write the dataset's input files plus ``etl.ini``; returns the config path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "points.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["traj_id", "object_id", "timestamp", "lat", "lon"])
        for traj_id, obj, t, lat, lon in ds.points:
            writer.writerow([traj_id, obj, format_timestamp(t), repr(lat), repr(lon)])
    features = []
    for p in ds.pois:
        props = {"poi_id": p.poi_id, "object_name": p.object_name,
                 "object_category": p.object_category, "allows_stop": p.allows_stop,
                 "allows_move": p.allows_move, "semantic_purpose": p.semantic_purpose,
                 "landmark_attrs": dict(p.landmark_attrs)}
        coords = [[q.lon, q.lat] for q in p.footprint.exterior]
        features.append({"type": "Feature", "properties": props,
                         "geometry": {"type": "Polygon", "coordinates": [coords]}})
    (d / "pois.geojson").write_text(
        json.dumps({"type": "FeatureCollection", "features": features}, indent=1), encoding="utf-8")
    events = [{"event_id": e.event_id, "footprint": e.footprint.to_wkt(),
               "event_item_name": e.event_item_name, "goal_name": e.goal_name,
               "activity_names": list(e.activity_names),
               "environment": {"env_type": e.env_type, "env_characteristics": e.env_characteristics},
               "t_start": format_timestamp(e.t_start), "t_end": format_timestamp(e.t_end)}
              for e in ds.events]
    (d / "events.json").write_text(json.dumps(events, indent=1), encoding="utf-8")
    posts = []
    for p in ds.posts:
        rec = {"post_id": p.post_id, "object_id": p.object_id, "t": format_timestamp(p.t),
               "medium_type": p.medium_type, "account_platform": p.account_platform,
               "content_kind": p.content_kind, "content_text": p.content_text,
               "expressive_thought": p.expressive_thought,
               "qualitative_mood": p.qualitative_mood}
        if p.location is not None:
            rec["location"] = {"lat": p.location.lat, "lon": p.location.lon}
        posts.append(rec)
    (d / "posts.json").write_text(json.dumps(posts, indent=1), encoding="utf-8")
    (d / "goal_rules.csv").write_text("\n".join(ds.goal_rules) + "\n", encoding="utf-8")
    config = d / "etl.ini"
    config.write_text(
        "points = points.csv\n"
        "pois = pois.geojson\n"
        "events = events.json\n"
        "posts = posts.json\n"
        "goal_rules = goal_rules.csv\n"
        f"eps_meters = {ds.eps_meters}\n"
        f"min_stop_duration_s = {ds.min_stop_duration_s}\n"
        f"hemisphere = {ds.hemisphere}\n"
        f"domain_profile = {ds.profile}\n",
        encoding="utf-8")
    return config
