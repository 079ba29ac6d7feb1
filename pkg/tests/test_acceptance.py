"""Acceptance criteria, one test each; the terminal summary prints PASS/FAIL per line."""

import hashlib
import math
import random
import time
from datetime import timedelta
from fractions import Fraction

from conftest import make_traj
from oracles import (
    contains,
    cosine_law_distance,
    load_flat,
    near_edge,
    oracle_query,
    winding_number,
)
from test_query import random_spec
from trajwarehouse import etl, fixtures
from trajwarehouse.enrichment import (
    EventOfInterest,
    GoalRules,
    PointOfInterest,
    build_semantic_trajectory,
)
from trajwarehouse.geo import GeoPoint, Polygon, haversine_distance, path_length, point_in_polygon
from trajwarehouse.query import Aggregate, QuerySpec, canned_spec, execute, rollup
from trajwarehouse.trajectory import EpisodeKind, NonMonotonicTime, SegmentationParams
from trajwarehouse.warehouse import Warehouse, schema_descriptor, table_file_names

# Levels per dimension, top to bottom, transcribed independently of the package.
EXPECTED_LEVELS = {
    "geographical": ["continent", "country", "state_province", "region", "city", "district",
                     "geo_object", "landmark_object", "activity_object", "semantic_purpose"],
    "temporal": ["calendar_year", "quarter", "calendar_season", "month", "week", "day_type",
                 "day", "hour", "minute", "second"],
    "events": ["event_item", "event_goal", "event_activity", "event_environment"],
    "trajectory": ["trajectory_object_type", "trajectory_model", "model_goal", "model_activity",
                   "model_behaviour", "transportation_mode", "transportation_type",
                   "transportation_object"],
    "social": ["social_medium_type", "social_medium_account", "content_post",
               "expressive_thought", "qualitative_mood"],
}
STORED_MEASURES = {"duration_s", "travel_distance_m", "average_trajectory_speed", "num_points",
                   "num_semantic_stops", "num_mobility_modes", "square_area_m2",
                   "event_time_duration_s", "activity_duration_s"}
NAMED_MEASURES = {"SquareArea", "OverallTemporalDuration", "NumberOfSemanticStops",
                  "NumberOfMobilityModes", "AverageTrajectorySpeed", "AverageEventTimeDuration",
                  "MinimumActivityDurationPerEvent", "MaximumTrajectoryTravelDistance"}

Q_PARAMS = {"season": "Summer", "polygon": fixtures.RECIFE_REGION_WKT, "speed_kmh": 30,
            "year_from": 2010, "year_to": 2015}


def _random_trajectory(rng: random.Random, k: int):
    lat, lon = rng.uniform(-60, 60), rng.uniform(-170, 170)
    n = rng.randint(2, 200)
    pts, times, t = [], [], 0
    moving = rng.random() < 0.5
    for _ in range(n):
        if rng.random() < 0.15:
            moving = not moving
        step = rng.uniform(20, 300) if moving else rng.uniform(0, 10)
        heading = rng.uniform(0, 2 * math.pi)
        lat = max(-80.0, min(80.0, lat + step * math.cos(heading) / 111_195))
        lon = max(-179.0, min(179.0, lon + step * math.sin(heading) / 111_195))
        pts.append((lat, lon))
        times.append(t)
        t += rng.randint(1, 120)
    return make_traj(pts, times, traj_id=f"r{k}", object_id=f"o{k}")


def _catalog_around(traj, rng):
    """POIs and events centred on a few of the trajectory's own samples."""
    pois, events = [], []
    for j in range(3):
        c = rng.choice(traj.points).point
        pois.append(PointOfInterest(f"p{j}", fixtures.square(c, rng.uniform(20, 400)),
                                    f"Place {j}", rng.choice(["Museum", "Park"]),
                                    semantic_purpose=rng.choice(["", "Leisure"])))
        tp = rng.choice(traj.points)
        events.append(EventOfInterest(f"e{j}", fixtures.square(tp.point, 500), "Fair",
                                      "Fun", tp.t - timedelta(minutes=30),
                                      tp.t + timedelta(minutes=30)))
    return pois, events


def test_criterion_1_definition_conformance():
    rng = random.Random(20160101)
    rules = GoalRules({("Museum", "Fair"): "Culture", ("Park", ""): "Rest"})
    started = time.perf_counter()
    for k in range(500):
        traj = _random_trajectory(rng, k)
        # strict time ordering: accepted input is strictly increasing, a repeat is refused
        ts = [tp.t for tp in traj.points]
        assert all(a < b for a, b in zip(ts, ts[1:]))
        if len(ts) > 2:
            try:
                make_traj([(p.point.lat, p.point.lon) for p in traj.points],
                          [0] + [(t - ts[0]).total_seconds() for t in ts[:-1]])
            except NonMonotonicTime as exc:
                assert exc.index == 1
            else:
                raise AssertionError("repeated timestamp accepted")

        params = SegmentationParams(rng.choice([20, 50, 100]), rng.choice([60, 300, 900]))
        pois, events = _catalog_around(traj, rng)
        st = build_semantic_trajectory(traj, pois, events, params, rules)
        segs = st.segments
        # coverage and alternation
        assert segs[0].episode.start_index == 0
        assert segs[-1].episode.end_index == len(traj.points) - 1
        for a, b in zip(segs, segs[1:]):
            assert a.episode.kind != b.episode.kind
            # contiguity: shared boundary sample
            assert a.episode.end_index == b.episode.start_index
            assert a.end.point == b.begin.point
        if not any(s.episode.is_stop for s in segs):
            assert len(segs) == 1 and segs[0].episode.kind is EpisodeKind.MOVE
        # annotation composition
        by_poi = {p.poi_id: p for p in pois}
        by_event = {e.event_id: e for e in events}
        for s in segs:
            ann = s.annotation
            poi = by_poi.get(s.poi_id)
            assert ann.geo_object_property == (poi.semantic_purpose if poi else "")
            assert ann.event_ref == (s.event_ids[0] if s.event_ids else None)
            item = by_event[ann.event_ref].event_item_name if ann.event_ref else ""
            assert ann.trajectory_goal == rules.lookup(poi.object_category if poi else "", item)
            assert ann.trajectory_goal == s.goal
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"{elapsed:.1f} s"


def test_criterion_2_geometry_oracles():
    rng = random.Random(2)
    checked = 0
    while checked < 1000:
        cx, cy = rng.uniform(-170, 170), rng.uniform(-80, 80)
        angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(4))
        r = rng.uniform(0.01, 5)
        ring = [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in angles]
        ring.append(ring[0])
        if len({(round(x, 12), round(y, 12)) for x, y in ring[:-1]}) < 4:
            continue
        poly = Polygon(tuple(GeoPoint(y, x) for x, y in ring))
        px, py = cx + rng.uniform(-1.5 * r, 1.5 * r), cy + rng.uniform(-1.5 * r, 1.5 * r)
        if not (-180 <= px <= 180 and -90 <= py <= 90) or near_edge(px, py, ring, 1e-9):
            continue
        assert point_in_polygon(GeoPoint(py, px), poly) == (winding_number(px, py, ring) != 0)
        assert point_in_polygon(GeoPoint(py, px), poly) == contains(ring, px, py)
        checked += 1

    for _ in range(1000):
        lat, lon = rng.uniform(-80, 80), rng.uniform(-175, 175)
        a = GeoPoint(lat, lon)
        b = GeoPoint(lat + rng.uniform(-5, 5), lon + rng.uniform(-5, 5))
        if a == b:
            continue
        ref = cosine_law_distance(a.lat, a.lon, b.lat, b.lon)
        assert abs(haversine_distance(a, b) - ref) <= 1e-6 * ref


def _hashes(directory):
    return {n: hashlib.sha256((directory / n).read_bytes()).hexdigest()
            for n in table_file_names()}


def test_criterion_3_etl_conservation(domain_builds, domain_warehouses):
    for name, (config, wh_dir, _) in domain_builds.items():
        staged = etl.extract(etl.load_config(config))
        wh = domain_warehouses[name]
        by_traj = {}
        for f in wh.facts:
            by_traj.setdefault(f.traj_id, []).append(f)
        assert set(by_traj) == {t.traj_id for t in staged.trajectories}
        for traj in staged.trajectories:
            facts = by_traj[traj.traj_id]
            assert math.fsum(f.duration_s for f in facts) == traj.span_s
            raw = path_length([tp.point for tp in traj.points])
            assert abs(math.fsum(f.travel_distance_m for f in facts) - raw) <= 1e-9 * raw
        before = _hashes(wh_dir)
        report = etl.run_pipeline(etl.load_config(config), wh_dir)
        assert report.facts_inserted == 0
        assert _hashes(wh_dir) == before, name


def _canned_params(wh, name):
    params = dict(Q_PARAMS)
    landmarks = sorted({wh.dimensions["geographical"].member(f.geoSpaceId)["LandmarkObjectName"]
                        for f in wh.facts} - {"UNKNOWN"})
    params.update(start_poi=landmarks[0], end_poi=landmarks[1])
    return params


def test_criterion_4_query_oracle_equivalence(domain_builds, domain_warehouses):
    started = time.perf_counter()
    specs = 0
    for name, (_, wh_dir, _) in domain_builds.items():
        wh = domain_warehouses[name]
        assert len(wh.facts) <= 200
        flat = load_flat(wh_dir, schema_descriptor())
        rng = random.Random(f"acceptance-{name}")
        queries = [random_spec(rng, flat) for _ in range(20)]
        params = _canned_params(wh, name)
        queries += [canned_spec(wh, q, params) for q in ("Q1", "Q2", "Q3", "Q4")]
        for spec in queries:
            cols, rows = oracle_query(flat, spec.bind().to_dict())
            got = execute(wh, spec)
            assert got.columns == cols, spec
            assert got.rows == rows, spec
            specs += 1
    assert specs >= 50 + 4
    assert time.perf_counter() - started < 30.0


def test_criterion_5_rollup_conservation(domain_warehouses):
    aggs = [Aggregate("COUNT"), Aggregate("SUM", "TemporalDuration"),
            Aggregate("SUM", "TravelDistance"), Aggregate("SUM", "NumPoints")]
    for name, wh in domain_warehouses.items():
        daily = execute(wh, QuerySpec(group_by=["CalendarYear", "Quarter", "Month", "Day"],
                                      aggregates=aggs))
        monthly = rollup(daily, "temporal", "day", "month")
        quarterly = rollup(monthly, "temporal", "month", "quarter")
        yearly = rollup(quarterly, "temporal", "quarter", "calendar_year")
        direct = execute(wh, QuerySpec(group_by=["CalendarYear"], aggregates=aggs))
        assert yearly.rows == direct.rows, name
        # exact totals, level by level
        for a in aggs:
            col = a.bind().column
            for table in (daily, monthly, quarterly, yearly):
                if a.fn == "COUNT":
                    assert sum(table.column(col)) == len(wh.facts)
                else:
                    total = sum((Fraction(p[col]) for p in table.partials), Fraction(0))
                    assert total == sum((Fraction(p[col]) for p in daily.partials), Fraction(0))

        fine = execute(wh, QuerySpec(group_by=["Country", "City"], aggregates=aggs))
        coarse = rollup(fine, "geographical", "city", "country")
        assert coarse.rows == execute(wh, QuerySpec(group_by=["Country"],
                                                    aggregates=aggs)).rows, name


def _end_to_end(root, name):
    config = fixtures.write_dataset(fixtures.DATASETS[name](), root / "in")
    etl.run_pipeline(etl.load_config(config), root / "wh")
    wh = Warehouse.load(root / "wh")
    params = _canned_params(wh, name)
    outputs = [execute(wh, canned_spec(wh, q, params)).to_csv()
               for q in ("Q1", "Q2", "Q3", "Q4")]
    return {n: (root / "wh" / n).read_bytes() for n in table_file_names()}, outputs


def test_criterion_6_determinism(tmp_path):
    for name in fixtures.DATASETS:
        first = _end_to_end(tmp_path / f"{name}-a", name)
        second = _end_to_end(tmp_path / f"{name}-b", name)
        assert first == second, name


def test_criterion_7_schema_completeness():
    desc = schema_descriptor()
    dims = {d["name"]: [lvl["level"] for lvl in d["levels"]] for d in desc["dimensions"]}
    assert dims == EXPECTED_LEVELS
    stored = {m["alias"] for m in desc["fact"]["measures"]}
    assert stored == STORED_MEASURES
    derived = {m["name"] for m in desc["fact"]["derived_measures"]}
    named = {m["name"] for m in desc["fact"]["measures"]} | derived
    assert NAMED_MEASURES <= named
