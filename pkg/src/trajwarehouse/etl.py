"""Extract / transform / load into the star schema.

Input files (all UTF-8):

* raw points: CSV ``traj_id,object_id,timestamp,lat,lon`` (ISO-8601 UTC)
* POI catalog: GeoJSON FeatureCollection of Polygon features
* event catalog: JSON array, footprints as WKT POLYGON
* social posts: JSON array
* goal rules: lines ``object_category,event_item_name,goal``

The config file is a flat ``key = value`` file; see ``load_config``.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import os
import re
import shutil
import tempfile
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence

from .enrichment import (
    DEFAULT_MODE_RULE,
    NO_MODE,
    EventOfInterest,
    GoalRules,
    ModeRule,
    PointOfInterest,
    SemanticSegment,
    SemanticTrajectory,
    SocialPost,
    attach_social_posts,
    build_semantic_trajectory,
    representative_point,
)
from .geo import GeometryError, GeoPoint, Polygon, bbox_area, parse_wkt_polygon
from .trajectory import (
    NonMonotonicTime,
    RawTrajectory,
    SegmentationParams,
    ShortTrajectoryWarning,
    TimedPoint,
    validate_raw_trajectory,
)
from .warehouse import UNKNOWN, FactRow, Warehouse

log = logging.getLogger(__name__)

REPORT_FILE = "load_report.json"


class EtlError(Exception):
    pass


class ConfigError(EtlError):
    pass


class ParseError(EtlError):
    def __init__(self, file, line: int, reason: str, others: Sequence["ParseError"] = ()):
        self.file = str(file)
        self.line = line
        self.reason = reason
        self.others = list(others)
        super().__init__(f"{self.file}:{line}: {reason}")

    @property
    def all_errors(self) -> list["ParseError"]:
        return [self] + self.others


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DomainProfile:
    name: str
    trajectory_object_type: str
    trajectory_model_name: str
    trajectory_model_feature: str
    behaviour_name: str
    mode_rule: ModeRule
    # transportation type -> (transportation mode, transportation object)
    type_info: dict

    def mode_of(self, transport_type: str) -> str:
        return self.type_info.get(transport_type, (UNKNOWN, UNKNOWN))[0]

    def object_of(self, transport_type: str) -> str:
        return self.type_info.get(transport_type, (UNKNOWN, UNKNOWN))[1]


_LAND_TYPES = {
    "Walking": ("Land", "Foot"),
    "Biking": ("Land", "Bike"),
    "Driving": ("Land", "Bus"),
    NO_MODE: (NO_MODE, NO_MODE),
}

PROFILES = {
    "tourism": DomainProfile("tourism", "Human Being", "Tourist", "Leisure Traveller",
                             "Velocity Rate", DEFAULT_MODE_RULE, _LAND_TYPES),
    "birds": DomainProfile("birds", "Animal", "Bird", "White Stork", "Flight Velocity",
                           ModeRule((), "Flight"),
                           {"Flight": ("Air", "Soaring Flight"), NO_MODE: (NO_MODE, NO_MODE)}),
    "traffic": DomainProfile("traffic", "Vehicle", "Car", "Passenger Car", "Vehicle Velocity",
                             ModeRule((), "Driving"),
                             {"Driving": ("Land", "Car"), NO_MODE: (NO_MODE, NO_MODE)}),
    "custom": DomainProfile("custom", "Moving Object", "Generic", UNKNOWN, "Velocity Rate",
                            DEFAULT_MODE_RULE, _LAND_TYPES),
}

# (upper bound in m/s, class); first match wins
VELOCITY_BANDS = ((0.5, "stationary"), (2.0, "slow"), (10.0, "moderate"))


def velocity_class(speed_mps: float) -> str:
    for bound, label in VELOCITY_BANDS:
        if speed_mps < bound:
            return label
    return "fast"


@dataclass(frozen=True)
class EtlConfig:
    points: Path
    pois: Path
    events: Path
    posts: Path
    goal_rules: Path
    params: SegmentationParams = field(default_factory=SegmentationParams)
    hemisphere: str = "North"
    domain_profile: str = "tourism"
    trajectory_model_feature: Optional[str] = None

    def __post_init__(self):
        if self.hemisphere not in ("North", "South"):
            raise ConfigError(f"hemisphere must be North or South, got {self.hemisphere!r}")
        if self.domain_profile not in PROFILES:
            raise ConfigError(f"domain_profile must be one of {sorted(PROFILES)}, "
                              f"got {self.domain_profile!r}")

    @property
    def profile(self) -> DomainProfile:
        return PROFILES[self.domain_profile]


CONFIG_KEYS = ("points", "pois", "events", "posts", "goal_rules")


def load_config(path: str | Path) -> EtlConfig:
    """Read a flat ``key = value`` config. Relative paths resolve against its directory.

    Keys: points, pois, events, posts, goal_rules (required paths);
    eps_meters, min_stop_duration_s, hemisphere, domain_profile,
    trajectory_model_feature (optional).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string("[etl]\n" + path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values = dict(parser["etl"])
    known = set(CONFIG_KEYS) | {"eps_meters", "min_stop_duration_s", "hemisphere",
                                "domain_profile", "trajectory_model_feature"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    missing = [k for k in CONFIG_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing keys {missing}")
    base = path.parent
    try:
        params = SegmentationParams(
            eps_meters=float(values.get("eps_meters", 50.0)),
            min_stop_duration_s=float(values.get("min_stop_duration_s", 300.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return EtlConfig(
        **{k: base / values[k] for k in CONFIG_KEYS},
        params=params,
        hemisphere=values.get("hemisphere", "North"),
        domain_profile=values.get("domain_profile", "tourism"),
        trajectory_model_feature=values.get("trajectory_model_feature"),
    )


# ---------------------------------------------------------------------------
# extract


@dataclass
class Staged:
    trajectories: list[RawTrajectory]
    pois: list[PointOfInterest]
    events: list[EventOfInterest]
    posts: list[SocialPost]
    goal_rules: GoalRules

    def counts(self) -> dict[str, int]:
        return {
            "trajectories": len(self.trajectories),
            "points": sum(len(t.points) for t in self.trajectories),
            "pois": len(self.pois),
            "events": len(self.events),
            "posts": len(self.posts),
            "goal_rules": len(self.goal_rules),
        }


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    t = datetime.fromisoformat(text)
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    t = t.astimezone(timezone.utc)
    if t.microsecond:
        raise ValueError("timestamps have 1-second resolution")
    return t


def format_timestamp(t: datetime) -> str:
    return t.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _read(path: Path) -> str:
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return path.read_text(encoding="utf-8")


def _raise_collected(errors: list[ParseError]) -> None:
    if errors:
        raise ParseError(errors[0].file, errors[0].line, errors[0].reason, errors[1:])


POINT_COLUMNS = ("traj_id", "object_id", "timestamp", "lat", "lon")


def read_points(path: Path) -> list[RawTrajectory]:
    text = _read(path)
    if not text.strip():
        return []
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or set(reader.fieldnames) != set(POINT_COLUMNS):
        raise ParseError(path, 1, f"header must be {','.join(POINT_COLUMNS)}")
    errors: list[ParseError] = []
    groups: dict[str, list[tuple[TimedPoint, str, int]]] = {}
    for row in reader:
        line = reader.line_num
        try:
            if None in row or any(row[c] is None or not row[c].strip() for c in POINT_COLUMNS):
                raise ValueError("wrong number of fields or empty field")
            tp = TimedPoint(GeoPoint(lat=float(row["lat"]), lon=float(row["lon"])),
                            parse_timestamp(row["timestamp"]))
        except (ValueError, GeometryError) as exc:
            errors.append(ParseError(path, line, str(exc)))
            continue
        groups.setdefault(row["traj_id"].strip(), []).append((tp, row["object_id"].strip(), line))
    _raise_collected(errors)

    trajectories = []
    for traj_id in sorted(groups):
        rows = sorted(groups[traj_id], key=lambda r: (r[0].t, r[2]))
        objects = {r[1] for r in rows}
        if len(objects) > 1:
            errors.append(ParseError(path, rows[0][2],
                                     f"trajectory {traj_id!r} has several object ids {sorted(objects)}"))
            continue
        try:
            trajectories.append(validate_raw_trajectory(traj_id, rows[0][1], [r[0] for r in rows]))
        except NonMonotonicTime as exc:
            errors.append(ParseError(path, rows[exc.index][2],
                                     f"trajectory {traj_id!r}: duplicate timestamp "
                                     f"{format_timestamp(rows[exc.index][0].t)}"))
    _raise_collected(errors)
    return trajectories


def _array_items(text: str, start: int) -> list[tuple[int, Any]]:
    """(line, value) for each element of the JSON array opening at ``start``."""
    dec = json.JSONDecoder()
    ws = re.compile(r"\s*")
    idx = ws.match(text, start + 1).end()
    items = []
    while idx < len(text) and text[idx] != "]":
        line = text.count("\n", 0, idx) + 1
        value, idx = dec.raw_decode(text, idx)
        items.append((line, value))
        idx = ws.match(text, idx).end()
        if idx < len(text) and text[idx] == ",":
            idx = ws.match(text, idx + 1).end()
    return items


def _load_json(path: Path, text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None


def _json_array_records(path: Path) -> list[tuple[int, Any]]:
    text = _read(path)
    if not text.strip():
        return []
    doc = _load_json(path, text)
    if not isinstance(doc, list):
        raise ParseError(path, 1, "expected a JSON array")
    return _array_items(text, text.index("["))


def _polygon_from_geojson(geom) -> Polygon:
    if not isinstance(geom, dict) or geom.get("type") != "Polygon":
        raise ValueError("feature geometry must be a GeoJSON Polygon")
    rings = geom.get("coordinates")
    if not isinstance(rings, list) or len(rings) != 1:
        raise ValueError("polygon must have exactly one ring (no holes)")
    return Polygon(tuple(GeoPoint(lat=float(c[1]), lon=float(c[0])) for c in rings[0]))


def _bool(value, name) -> bool:
    if isinstance(value, bool):
        return value
    raise ValueError(f"{name} must be a boolean")


def _text(rec: dict, key: str, required: bool = True) -> str:
    value = rec.get(key)
    if value is None:
        if required:
            raise ValueError(f"missing field {key!r}")
        return ""
    if not isinstance(value, (str, int, float)):
        raise ValueError(f"field {key!r} must be a string")
    return str(value)


_POI_FIELDS = {"poi_id", "object_name", "object_category", "allows_stop",
               "allows_move", "semantic_purpose", "landmark_attrs"}


def read_pois(path: Path) -> list[PointOfInterest]:
    text = _read(path)
    if not text.strip():
        return []
    doc = _load_json(path, text)
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection" \
            or not isinstance(doc.get("features"), list):
        raise ParseError(path, 1, "expected a GeoJSON FeatureCollection")
    m = re.search(r'"features"\s*:\s*\[', text)
    located = _array_items(text, m.end() - 1) if m else [(1, f) for f in doc["features"]]
    pois, errors, seen = [], [], set()
    for line, feat in located:
        try:
            if not isinstance(feat, dict) or feat.get("type") != "Feature":
                raise ValueError("expected a GeoJSON Feature")
            props = feat.get("properties") or {}
            attrs = {str(k): str(v) for k, v in (props.get("landmark_attrs") or {}).items()}
            attrs.update({k: str(v) for k, v in props.items() if k not in _POI_FIELDS})
            poi = PointOfInterest(
                poi_id=_text(props, "poi_id"),
                footprint=_polygon_from_geojson(feat.get("geometry")),
                object_name=_text(props, "object_name"),
                object_category=_text(props, "object_category"),
                allows_stop=_bool(props.get("allows_stop", True), "allows_stop"),
                allows_move=_bool(props.get("allows_move", False), "allows_move"),
                semantic_purpose=_text(props, "semantic_purpose", required=False),
                landmark_attrs=dict(sorted(attrs.items())),
            )
            if poi.poi_id in seen:
                raise ValueError(f"duplicate poi_id {poi.poi_id!r}")
            seen.add(poi.poi_id)
            pois.append(poi)
        except (ValueError, TypeError, IndexError, GeometryError) as exc:
            errors.append(ParseError(path, line, str(exc)))
    _raise_collected(errors)
    return pois


def read_events(path: Path) -> list[EventOfInterest]:
    events, errors, seen = [], [], set()
    for line, rec in _json_array_records(path):
        try:
            if not isinstance(rec, dict):
                raise ValueError("expected a JSON object")
            env = rec.get("environment") or {}
            activities = rec.get("activity_names") or []
            if not isinstance(activities, list):
                raise ValueError("activity_names must be a list")
            ev = EventOfInterest(
                event_id=_text(rec, "event_id"),
                footprint=parse_wkt_polygon(_text(rec, "footprint")),
                event_item_name=_text(rec, "event_item_name"),
                goal_name=_text(rec, "goal_name", required=False),
                t_start=parse_timestamp(_text(rec, "t_start")),
                t_end=parse_timestamp(_text(rec, "t_end")),
                activity_names=tuple(str(a) for a in activities),
                env_type=_text(env, "env_type", required=False),
                env_characteristics=_text(env, "env_characteristics", required=False),
            )
            if ev.event_id in seen:
                raise ValueError(f"duplicate event_id {ev.event_id!r}")
            seen.add(ev.event_id)
            events.append(ev)
        except (ValueError, TypeError, GeometryError) as exc:
            errors.append(ParseError(path, line, str(exc)))
    _raise_collected(errors)
    return events


def read_posts(path: Path) -> list[SocialPost]:
    posts, errors = [], []
    for line, rec in _json_array_records(path):
        try:
            if not isinstance(rec, dict):
                raise ValueError("expected a JSON object")
            loc = rec.get("location")
            location = GeoPoint(lat=float(loc["lat"]), lon=float(loc["lon"])) if loc else None
            posts.append(SocialPost(
                post_id=_text(rec, "post_id"),
                object_id=_text(rec, "object_id"),
                t=parse_timestamp(_text(rec, "t")),
                medium_type=_text(rec, "medium_type"),
                account_platform=_text(rec, "account_platform"),
                content_kind=_text(rec, "content_kind"),
                content_text=_text(rec, "content_text", required=False),
                expressive_thought=_text(rec, "expressive_thought"),
                qualitative_mood=_text(rec, "qualitative_mood"),
                location=location,
            ))
        except (ValueError, TypeError, KeyError, GeometryError) as exc:
            errors.append(ParseError(path, line, str(exc)))
    _raise_collected(errors)
    return posts


def read_goal_rules(path: Path) -> GoalRules:
    text = _read(path)
    try:
        return GoalRules.from_lines(text.splitlines())
    except ValueError as exc:
        m = re.match(r"line (\d+): (.*)", str(exc))
        raise ParseError(path, int(m.group(1)) if m else 1, m.group(2) if m else str(exc)) from None


def extract(config: EtlConfig) -> Staged:
    """Parse and validate every input file; any parse error aborts."""
    return Staged(
        trajectories=read_points(config.points),
        pois=read_pois(config.pois),
        events=read_events(config.events),
        posts=read_posts(config.posts),
        goal_rules=read_goal_rules(config.goal_rules),
    )


# ---------------------------------------------------------------------------
# transform

_SEASONS_NORTH = {12: "Winter", 1: "Winter", 2: "Winter", 3: "Spring", 4: "Spring", 5: "Spring",
                  6: "Summer", 7: "Summer", 8: "Summer", 9: "Fall", 10: "Fall", 11: "Fall"}
_OPPOSITE = {"Winter": "Summer", "Summer": "Winter", "Spring": "Fall", "Fall": "Spring"}


def season(month: int, hemisphere: str = "North") -> str:
    s = _SEASONS_NORTH[month]
    return s if hemisphere == "North" else _OPPOSITE[s]


def temporal_attributes(t: datetime, hemisphere: str = "North") -> dict[str, Any]:
    t = t.astimezone(timezone.utc)
    return {
        "calendar_year": t.year,
        "quarter": f"Q{(t.month - 1) // 3 + 1}",
        "calendar_season": season(t.month, hemisphere),
        "month": t.month,
        "week": t.isocalendar()[1],
        "day_type": "WeekEndDay" if t.weekday() >= 5 else "WeekDay",
        "day": t.day,
        "hour": t.hour,
        "minute": t.minute,
        "second": t.second,
    }


@dataclass
class FactDraft:
    traj_id: str
    ordinal: int
    dimensions: dict[str, dict[str, Any]]
    measures: dict[str, Any]


@dataclass
class TransformedTrajectory:
    semantic: SemanticTrajectory
    drafts: list[FactDraft]


@dataclass
class Transformed:
    trajectories: list[TransformedTrajectory]
    orphan_posts: int = 0
    warnings: list[str] = field(default_factory=list)


_GEO_PATH = ("continent", "country", "state_province", "region", "city", "district")


def _geo_attrs(seg: SemanticSegment, traj: RawTrajectory, poi: Optional[PointOfInterest]):
    if poi is None:
        attrs = {k: None for k in _GEO_PATH}
        attrs.update(geo_object_name=None, landmark_object_name=None,
                     activity_object_name=None, semantic_purpose=None,
                     geo_object_type=representative_point(traj, seg.episode).to_wkt())
        return attrs
    la = poi.landmark_attrs
    attrs = {k: la.get(k) for k in _GEO_PATH}
    attrs.update(
        geo_object_name=la.get("geo_object_name", poi.object_category),
        geo_object_type=poi.footprint.to_wkt(),
        landmark_object_name=poi.object_name,
        activity_object_name=la.get("activity_object_name"),
        semantic_purpose=poi.semantic_purpose,
    )
    return attrs


def _event_attrs(event: Optional[EventOfInterest]):
    if event is None:
        return {"event_item_name": None, "event_goal_name": None, "event_activity_name": None,
                "event_environment_type": None, "event_environment_charac": None}
    return {
        "event_item_name": event.event_item_name,
        "event_goal_name": event.goal_name,
        "event_activity_name": "; ".join(event.activity_names),
        "event_environment_type": event.env_type,
        "event_environment_charac": event.env_characteristics,
    }


def _social_attrs(seg: SemanticSegment):
    post = min(seg.posts, key=lambda p: (p.t, p.post_id)) if seg.posts else None
    if post is None:
        return {"social_medium_type": None, "social_medium_account": None,
                "content_post_kind": None, "expressive_thought": None, "qualitative_mood": None}
    return {
        "social_medium_type": post.medium_type,
        "social_medium_account": post.account_platform,
        "content_post_kind": post.content_kind,
        "expressive_thought": post.expressive_thought,
        "qualitative_mood": post.qualitative_mood,
    }


def segment_fact_draft(seg: SemanticSegment, traj: RawTrajectory, config: EtlConfig,
                       pois: dict[str, PointOfInterest],
                       events: dict[str, EventOfInterest]) -> FactDraft:
    profile = config.profile
    poi = pois.get(seg.poi_id) if seg.poi_id else None
    event = events.get(seg.annotation.event_ref) if seg.annotation.event_ref else None
    ep, stats = seg.episode, seg.stats
    is_move = not ep.is_stop
    activity = "; ".join(event.activity_names) if event else None
    if not activity and poi is not None:
        activity = poi.landmark_attrs.get("activity_object_name")
    trajectory = {
        "trajectory_object_type": profile.trajectory_object_type,
        "trajectory_model_name": profile.trajectory_model_name,
        "trajectory_model_feature": config.trajectory_model_feature or profile.trajectory_model_feature,
        "model_goal": seg.goal,
        "model_activity": activity,
        "model_behaviour_name": profile.behaviour_name,
        "model_behaviour_movement_velocity": "stationary" if ep.is_stop
        else velocity_class(stats.avg_speed_mps),
        "transportation_mode_name": profile.mode_of(seg.transport_mode),
        "transportation_type_name": seg.transport_mode,
        "transportation_object_name": profile.object_of(seg.transport_mode),
        "traj_segment_semantic_start_point": seg.begin.point.point.to_wkt(),
        "traj_segment_semantic_end_point": seg.end.point.point.to_wkt(),
    }
    measures = {
        "duration_s": stats.duration_s,
        "travel_distance_m": stats.travel_distance_m,
        "average_trajectory_speed": stats.avg_speed_mps,
        # a shared boundary point counts toward the earlier episode only
        "num_points": stats.num_points - (1 if seg.ordinal else 0),
        "num_semantic_stops": 1 if ep.is_stop else 0,
        "num_mobility_modes": 1 if is_move and seg.transport_mode != NO_MODE else 0,
        "square_area_m2": bbox_area(ep.bbox),
        "event_time_duration_s": event.overlap_s(ep.t_begin, ep.t_end) if event else 0.0,
        "activity_duration_s": stats.duration_s if ep.is_stop else 0.0,
    }
    return FactDraft(
        traj_id=traj.traj_id,
        ordinal=seg.ordinal,
        dimensions={
            "geographical": _geo_attrs(seg, traj, poi),
            "temporal": temporal_attributes(seg.begin.point.t, config.hemisphere),
            "events": _event_attrs(event),
            "trajectory": trajectory,
            "social": _social_attrs(seg),
        },
        measures=measures,
    )


def transform(staged: Staged, config: EtlConfig) -> Transformed:
    pois = {p.poi_id: p for p in staged.pois}
    events = {e.event_id: e for e in staged.events}
    posts_by_object: dict[str, list[SocialPost]] = {}
    for post in staged.posts:
        posts_by_object.setdefault(post.object_id, []).append(post)

    out = Transformed(trajectories=[])
    attached: set[str] = set()
    for traj in sorted(staged.trajectories, key=lambda t: t.traj_id):
        if len(traj.points) < 2:
            out.warnings.append(f"trajectory {traj.traj_id!r} has a single point; no episodes")
        with warnings.catch_warnings():
            # already recorded in the load report
            warnings.simplefilter("ignore", ShortTrajectoryWarning)
            st = build_semantic_trajectory(traj, staged.pois, staged.events, config.params,
                                           staged.goal_rules, config.profile.mode_rule)
        st = attach_social_posts(st, posts_by_object.get(traj.object_id, []))
        for seg in st.segments:
            attached.update(p.post_id for p in seg.posts)
        drafts = [segment_fact_draft(seg, traj, config, pois, events) for seg in st.segments]
        out.trajectories.append(TransformedTrajectory(st, drafts))
    out.orphan_posts = sum(1 for p in staged.posts if p.post_id not in attached)
    return out


# ---------------------------------------------------------------------------
# load


@dataclass
class LoadReport:
    trajectories_in: int = 0
    episodes_built: int = 0
    facts_inserted: int = 0
    facts_skipped_duplicate: int = 0
    dimension_cardinalities: dict[str, int] = field(default_factory=dict)
    orphan_posts: int = 0
    unmatched_stops: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def load(warehouse: Warehouse, transformed: Transformed) -> LoadReport:
    report = LoadReport(orphan_posts=transformed.orphan_posts,
                        warnings=list(transformed.warnings))
    for tt in sorted(transformed.trajectories, key=lambda t: t.semantic.traj_id):
        report.trajectories_in += 1
        for seg in tt.semantic.segments:
            if seg.episode.is_stop and seg.poi_id is None:
                report.unmatched_stops += 1
        for draft in tt.drafts:
            report.episodes_built += 1
            if warehouse.has_fact(draft.traj_id, draft.ordinal):
                report.facts_skipped_duplicate += 1
                continue
            keys = {dim: warehouse.resolve_dimension_member(dim, attrs)
                    for dim, attrs in draft.dimensions.items()}
            warehouse.insert_fact(FactRow(
                geoSpaceId=keys["geographical"],
                tempInstId=keys["temporal"],
                eventsRepId=keys["events"],
                trajRepId=keys["trajectory"],
                socialInterId=keys["social"],
                traj_id=draft.traj_id,
                segment_ordinal=draft.ordinal,
                **draft.measures,
            ))
            report.facts_inserted += 1
    report.dimension_cardinalities = warehouse.cardinalities()
    return report


# ---------------------------------------------------------------------------
# end to end


def _swap_in(tmp: Path, out: Path) -> None:
    if out.exists():
        backup = Path(tempfile.mkdtemp(prefix=f".{out.name}.old-", dir=out.parent))
        backup.rmdir()
        os.replace(out, backup)
        try:
            os.replace(tmp, out)
        except BaseException:
            os.replace(backup, out)
            raise
        shutil.rmtree(backup, ignore_errors=True)
    else:
        os.replace(tmp, out)


def write_warehouse(warehouse: Warehouse, out_dir: str | Path,
                    report: LoadReport | None = None) -> None:
    """Write all tables (and the report) to a temp dir, then swap it in."""
    out = Path(out_dir).resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.tmp-", dir=out.parent))
    try:
        warehouse.save(tmp)
        if report is not None:
            (tmp / REPORT_FILE).write_text(report.to_json(), encoding="utf-8")
        if out.is_dir():
            for extra in out.iterdir():
                if not (tmp / extra.name).exists():
                    if extra.is_dir():
                        shutil.copytree(extra, tmp / extra.name)
                    else:
                        shutil.copy2(extra, tmp / extra.name)
        _swap_in(tmp, out)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp, ignore_errors=True)


def run_pipeline(config: EtlConfig, out_dir: str | Path | None = None,
                 warehouse: Warehouse | None = None) -> LoadReport:
    """Extract, transform and load; with ``out_dir`` the result is persisted atomically.

    An existing warehouse in ``out_dir`` is loaded first, so re-running on the
    same inputs inserts nothing.
    """
    if warehouse is None:
        warehouse = Warehouse.load(out_dir) if out_dir and Warehouse.exists(out_dir) else Warehouse()
    staged = extract(config)
    transformed = transform(staged, config)
    report = load(warehouse, transformed)
    integrity = warehouse.integrity_check()
    if not integrity.ok:
        raise EtlError("integrity check failed after load: " + "; ".join(integrity.entries))
    if out_dir is not None:
        write_warehouse(warehouse, out_dir, report)
    log.info("loaded %d facts (%d duplicates skipped)", report.facts_inserted,
             report.facts_skipped_duplicate)
    return report
