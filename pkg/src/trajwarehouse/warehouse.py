"""Star schema: five dimension tables, one fact table, CSV persistence.

Attribute names come in two spellings. The canonical one is the CSV column
name (``CalendarSeason``, ``EventItemName``, ...), matching the column names
used by the formulated queries; every attribute also has a snake_case alias
(``calendar_season``). Both are accepted wherever an attribute is named.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

UNKNOWN = "UNKNOWN"
UNKNOWN_KEY = 0

TEXT, INT, FLOAT, GEOMETRY = "text", "int", "float", "geometry"


class WarehouseError(Exception):
    pass


class SchemaMismatch(WarehouseError):
    pass


class UnknownDimension(WarehouseError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DanglingForeignKey(WarehouseError):
    def __init__(self, dimension: str, key: int):
        self.dimension = dimension
        self.key = key
        super().__init__(f"{dimension} key {key} does not resolve to a dimension member")


@dataclass(frozen=True)
class Attribute:
    name: str
    alias: str
    kind: str = TEXT


@dataclass(frozen=True)
class DimensionSchema:
    name: str
    table: str
    key: str
    attributes: tuple[Attribute, ...]
    # (level, attribute alias), top to bottom
    levels: tuple[tuple[str, str], ...]

    @property
    def file_name(self) -> str:
        return self.table + ".csv"

    @property
    def columns(self) -> list[str]:
        return [self.key] + [a.name for a in self.attributes]

    def level_attribute(self, level: str) -> Attribute:
        for lvl, alias in self.levels:
            if lvl == level:
                return next(a for a in self.attributes if a.alias == alias)
        raise KeyError(level)

    def unknown_tuple(self) -> tuple:
        return tuple(UNKNOWN if a.kind == TEXT else None for a in self.attributes)


def _attrs(*specs) -> tuple[Attribute, ...]:
    out = []
    for spec in specs:
        name, alias, *kind = spec
        out.append(Attribute(name, alias, kind[0] if kind else TEXT))
    return tuple(out)


GEOGRAPHICAL = DimensionSchema(
    name="geographical",
    table="dim_geographical_space_tbl",
    key="geoSpaceId",
    attributes=_attrs(
        ("Continent", "continent"),
        ("Country", "country"),
        ("StateProvince", "state_province"),
        ("Region", "region"),
        ("City", "city"),
        ("District", "district"),
        ("GeoObjectName", "geo_object_name"),
        ("GeoObjectType", "geo_object_type", GEOMETRY),
        ("LandmarkObjectName", "landmark_object_name"),
        ("ActivityObjectName", "activity_object_name"),
        ("SemanticPurpose", "semantic_purpose"),
    ),
    levels=(
        ("continent", "continent"),
        ("country", "country"),
        ("state_province", "state_province"),
        ("region", "region"),
        ("city", "city"),
        ("district", "district"),
        ("geo_object", "geo_object_name"),
        ("landmark_object", "landmark_object_name"),
        ("activity_object", "activity_object_name"),
        ("semantic_purpose", "semantic_purpose"),
    ),
)

TEMPORAL = DimensionSchema(
    name="temporal",
    table="dim_temporal_instance_tbl",
    key="tempInstId",
    attributes=_attrs(
        ("CalendarYear", "calendar_year", INT),
        ("Quarter", "quarter"),
        ("CalendarSeason", "calendar_season"),
        ("Month", "month", INT),
        ("Week", "week", INT),
        ("DayType", "day_type"),
        ("Day", "day", INT),
        ("Hour", "hour", INT),
        ("Minute", "minute", INT),
        ("Second", "second", INT),
    ),
    levels=tuple((a, a) for a in (
        "calendar_year", "quarter", "calendar_season", "month", "week",
        "day_type", "day", "hour", "minute", "second")),
)

EVENTS = DimensionSchema(
    name="events",
    table="dim_events_representation_tbl",
    key="eventsRepId",
    attributes=_attrs(
        ("EventItemName", "event_item_name"),
        ("EventGoalName", "event_goal_name"),
        ("EventActivityName", "event_activity_name"),
        ("EventEnvironmentType", "event_environment_type"),
        ("EventEnvironmentCharac", "event_environment_charac"),
    ),
    levels=(
        ("event_item", "event_item_name"),
        ("event_goal", "event_goal_name"),
        ("event_activity", "event_activity_name"),
        ("event_environment", "event_environment_type"),
    ),
)

TRAJECTORY = DimensionSchema(
    name="trajectory",
    table="dim_trajectory_representation",
    key="trajRepId",
    attributes=_attrs(
        ("TrajectoryObjectType", "trajectory_object_type"),
        ("TrajectoryModelName", "trajectory_model_name"),
        ("TrajectoryModelFeature", "trajectory_model_feature"),
        ("TrajectoryModelGoal", "model_goal"),
        ("TrajectoryModelActivity", "model_activity"),
        ("TrajectoryModelBehaviourName", "model_behaviour_name"),
        ("TrajModelBehaviourMovementVelocity", "model_behaviour_movement_velocity"),
        ("TrajectoryTransportationModeName", "transportation_mode_name"),
        ("TrajectoryTransportationTypeName", "transportation_type_name"),
        ("TrajectoryTransportationObjectName", "transportation_object_name"),
        ("TrajSegmentSemanticStartPoint", "traj_segment_semantic_start_point", GEOMETRY),
        ("TrajSegmentSemanticEndPoint", "traj_segment_semantic_end_point", GEOMETRY),
    ),
    levels=(
        ("trajectory_object_type", "trajectory_object_type"),
        ("trajectory_model", "trajectory_model_name"),
        ("model_goal", "model_goal"),
        ("model_activity", "model_activity"),
        ("model_behaviour", "model_behaviour_name"),
        ("transportation_mode", "transportation_mode_name"),
        ("transportation_type", "transportation_type_name"),
        ("transportation_object", "transportation_object_name"),
    ),
)

SOCIAL = DimensionSchema(
    name="social",
    table="dim_social_interaction",
    key="socialInterId",
    attributes=_attrs(
        ("SocialMediumType", "social_medium_type"),
        ("SocialMediumAccount", "social_medium_account"),
        ("ContentPostKind", "content_post_kind"),
        ("ExpressiveThought", "expressive_thought"),
        ("QualitativeMood", "qualitative_mood"),
    ),
    levels=(
        ("social_medium_type", "social_medium_type"),
        ("social_medium_account", "social_medium_account"),
        ("content_post", "content_post_kind"),
        ("expressive_thought", "expressive_thought"),
        ("qualitative_mood", "qualitative_mood"),
    ),
)

DIMENSIONS: dict[str, DimensionSchema] = {
    d.name: d for d in (GEOGRAPHICAL, TEMPORAL, EVENTS, TRAJECTORY, SOCIAL)
}

VELOCITY_CLASSES = ("stationary", "slow", "moderate", "fast")

FACT_TABLE = "fact_traj_tbl"
FACT_KEYS = ("geoSpaceId", "tempInstId", "eventsRepId", "trajRepId", "socialInterId")
FACT_DEGENERATE = _attrs(("TrajId", "traj_id"), ("SegmentOrdinal", "segment_ordinal", INT))
MEASURES = _attrs(
    ("TemporalDuration", "duration_s", FLOAT),
    ("TravelDistance", "travel_distance_m", FLOAT),
    ("AverageTrajectorySpeed", "average_trajectory_speed", FLOAT),
    ("NumPoints", "num_points", INT),
    ("NumSemanticStops", "num_semantic_stops", INT),
    ("NumMobilityModes", "num_mobility_modes", INT),
    ("SquareArea", "square_area_m2", FLOAT),
    ("EventTimeDuration", "event_time_duration_s", FLOAT),
    ("ActivityDuration", "activity_duration_s", FLOAT),
)
FACT_COLUMNS = ["factId", *FACT_KEYS] + [a.name for a in FACT_DEGENERATE + MEASURES]

# Trajectory-level measures are aggregates over episode-grain facts.
DERIVED_MEASURES = (
    {"name": "SquareArea", "aggregate": "SUM", "target": "SquareArea"},
    {"name": "OverallTemporalDuration", "aggregate": "SUM", "target": "TemporalDuration"},
    {"name": "NumberOfSemanticStops", "aggregate": "SUM", "target": "NumSemanticStops"},
    {"name": "NumberOfMobilityModes", "aggregate": "COUNT_DISTINCT",
     "target": "TrajectoryTransportationTypeName"},
    {"name": "AverageTrajectorySpeed", "aggregate": "AVG", "target": "AverageTrajectorySpeed"},
    {"name": "AverageEventTimeDuration", "aggregate": "AVG", "target": "EventTimeDuration"},
    {"name": "MinimumActivityDurationPerEvent", "aggregate": "MIN",
     "target": "ActivityDuration", "group_by": "EventItemName"},
    {"name": "MaximumTrajectoryTravelDistance", "aggregate": "MAX", "target": "TravelDistance"},
)


def dimension_schema(dim: str) -> DimensionSchema:
    try:
        return DIMENSIONS[dim]
    except KeyError:
        raise UnknownDimension(f"unknown dimension {dim!r}; expected one of "
                               f"{sorted(DIMENSIONS)}") from None


def hierarchy_levels(dim: str) -> list[str]:
    return [lvl for lvl, _ in dimension_schema(dim).levels]


@dataclass
class FactRow:
    geoSpaceId: int
    tempInstId: int
    eventsRepId: int
    trajRepId: int
    socialInterId: int
    traj_id: str
    segment_ordinal: int
    duration_s: float = 0.0
    travel_distance_m: float = 0.0
    average_trajectory_speed: float = 0.0
    num_points: int = 0
    num_semantic_stops: int = 0
    num_mobility_modes: int = 0
    square_area_m2: float = 0.0
    event_time_duration_s: float = 0.0
    activity_duration_s: float = 0.0
    factId: int = 0

    @property
    def natural_key(self) -> tuple[str, int]:
        return (self.traj_id, self.segment_ordinal)

    def keys(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in FACT_KEYS}

    def measures(self) -> dict[str, Any]:
        return {m.alias: getattr(self, m.alias) for m in MEASURES}


def _normalize(attr: Attribute, value):
    if value is None:
        return UNKNOWN if attr.kind == TEXT else None
    if attr.kind == TEXT:
        value = str(value).strip()
        return value or UNKNOWN
    if attr.kind == INT:
        return int(value)
    if attr.kind == FLOAT:
        return float(value)
    return str(value)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_cell(kind: str, text: str):
    if kind == TEXT:
        return text
    if text == "":
        return None
    if kind == INT:
        return int(text)
    if kind == FLOAT:
        return float(text)
    return text


class DimensionTable:
    """Members deduplicated on their full attribute tuple; key == list index."""

    def __init__(self, schema: DimensionSchema):
        self.schema = schema
        self.members: list[tuple] = [schema.unknown_tuple()]
        self._index: dict[tuple, int] = {self.members[0]: UNKNOWN_KEY}
        by_name = {}
        for a in schema.attributes:
            by_name[a.alias] = a
            by_name[a.name] = a
        self._by_name = by_name

    def __len__(self):
        return len(self.members)

    def __contains__(self, key) -> bool:
        return isinstance(key, int) and 0 <= key < len(self.members)

    def coerce(self, attrs) -> tuple:
        attributes = self.schema.attributes
        if isinstance(attrs, Mapping):
            given = {}
            for k, v in attrs.items():
                a = self._by_name.get(k)
                if a is None:
                    raise SchemaMismatch(f"{self.schema.name}: unknown attribute {k!r}")
                if a.alias in given:
                    raise SchemaMismatch(f"{self.schema.name}: attribute {k!r} given twice")
                given[a.alias] = v
            missing = [a.alias for a in attributes if a.alias not in given]
            if missing:
                raise SchemaMismatch(f"{self.schema.name}: missing attributes {missing}")
            values = [given[a.alias] for a in attributes]
        else:
            values = list(attrs)
            if len(values) != len(attributes):
                raise SchemaMismatch(f"{self.schema.name}: expected {len(attributes)} "
                                     f"attributes, got {len(values)}")
        return tuple(_normalize(a, v) for a, v in zip(attributes, values))

    def resolve(self, attrs) -> int:
        member = self.coerce(attrs)
        key = self._index.get(member)
        if key is None:
            key = len(self.members)
            self.members.append(member)
            self._index[member] = key
        return key

    def member(self, key: int) -> dict[str, Any]:
        values = self.members[key]
        return {a.name: v for a, v in zip(self.schema.attributes, values)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.schema.columns)
        for key, member in enumerate(self.members):
            writer.writerow([key] + [_cell(v) for v in member])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, schema: DimensionSchema, text: str) -> "DimensionTable":
        table = cls(schema)
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != schema.columns:
            raise SchemaMismatch(f"{schema.file_name}: unexpected header {header}")
        table.members = []
        table._index = {}
        for n, row in enumerate(reader):
            if int(row[0]) != n:
                raise SchemaMismatch(f"{schema.file_name}: keys must be dense, "
                                     f"got {row[0]} at position {n}")
            member = tuple(_parse_cell(a.kind, v) for a, v in zip(schema.attributes, row[1:]))
            table.members.append(member)
            # keep the first occurrence; duplicates surface in integrity_check
            table._index.setdefault(member, n)
        if not table.members or table.members[0] != schema.unknown_tuple():
            raise SchemaMismatch(f"{schema.file_name}: key 0 must be the UNKNOWN member")
        return table


@dataclass
class IntegrityReport:
    dangling_keys: list[str] = field(default_factory=list)
    duplicate_members: list[str] = field(default_factory=list)
    measure_violations: list[str] = field(default_factory=list)

    @property
    def entries(self) -> list[str]:
        return self.dangling_keys + self.duplicate_members + self.measure_violations

    @property
    def ok(self) -> bool:
        return not self.entries


_KEY_DIM = {
    "geoSpaceId": "geographical",
    "tempInstId": "temporal",
    "eventsRepId": "events",
    "trajRepId": "trajectory",
    "socialInterId": "social",
}


class Warehouse:
    def __init__(self):
        self.dimensions = {name: DimensionTable(s) for name, s in DIMENSIONS.items()}
        self.facts: list[FactRow] = []
        self._natural: dict[tuple[str, int], int] = {}

    def dimension(self, dim: str) -> DimensionTable:
        dimension_schema(dim)
        return self.dimensions[dim]

    def resolve_dimension_member(self, dim: str, attrs) -> int:
        return self.dimension(dim).resolve(attrs)

    def cardinalities(self) -> dict[str, int]:
        return {name: len(t) for name, t in sorted(self.dimensions.items())}

    def has_fact(self, traj_id: str, ordinal: int) -> bool:
        return (traj_id, ordinal) in self._natural

    def insert_fact(self, row: FactRow) -> int:
        for key_col, dim in _KEY_DIM.items():
            key = getattr(row, key_col)
            if key is None:
                raise DanglingForeignKey(dim, key)
            if key not in self.dimensions[dim]:
                raise DanglingForeignKey(dim, key)
        if row.natural_key in self._natural:
            raise WarehouseError(f"duplicate fact natural key {row.natural_key}")
        row.factId = len(self.facts) + 1
        self.facts.append(row)
        self._natural[row.natural_key] = row.factId
        return row.factId

    def integrity_check(self) -> IntegrityReport:
        report = IntegrityReport()
        for row in self.facts:
            for key_col, dim in _KEY_DIM.items():
                key = getattr(row, key_col)
                if key not in self.dimensions[dim]:
                    report.dangling_keys.append(
                        f"fact {row.factId}: {key_col}={key} missing from {dim}")
        for name, table in sorted(self.dimensions.items()):
            seen: dict[tuple, int] = {}
            for key, member in enumerate(table.members):
                if member in seen:
                    report.duplicate_members.append(
                        f"{name}: key {key} duplicates key {seen[member]}")
                else:
                    seen[member] = key
        for row in self.facts:
            for alias, value in row.measures().items():
                if value is None or not math.isfinite(value) or value < 0:
                    report.measure_violations.append(
                        f"fact {row.factId}: {alias}={value!r} is not a non-negative number")
            d, t, v = row.travel_distance_m, row.duration_s, row.average_trajectory_speed
            expected = d / t if t > 0 else 0.0
            if abs(v - expected) > 1e-9 * abs(expected) or (expected == 0 and v != 0):
                report.measure_violations.append(
                    f"fact {row.factId}: speed {v!r} != distance/duration {expected!r}")
        return report

    # persistence

    def table_texts(self) -> dict[str, str]:
        out = {s.file_name: self.dimensions[name].to_csv() for name, s in DIMENSIONS.items()}
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(FACT_COLUMNS)
        for row in self.facts:
            writer.writerow([row.factId, *(row.keys().values()), row.traj_id,
                             row.segment_ordinal, *(_cell(v) for v in row.measures().values())])
        out[FACT_TABLE + ".csv"] = buf.getvalue()
        return out

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, text in self.table_texts().items():
            (directory / name).write_text(text, encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "Warehouse":
        directory = Path(directory)
        wh = cls()
        for name, schema in DIMENSIONS.items():
            text = (directory / schema.file_name).read_text(encoding="utf-8")
            wh.dimensions[name] = DimensionTable.from_csv(schema, text)
        text = (directory / (FACT_TABLE + ".csv")).read_text(encoding="utf-8")
        reader = csv.reader(io.StringIO(text))
        if next(reader, None) != FACT_COLUMNS:
            raise SchemaMismatch(f"{FACT_TABLE}.csv: unexpected header")
        for raw in reader:
            rec = dict(zip(FACT_COLUMNS, raw))
            row = FactRow(
                **{k: int(rec[k]) for k in FACT_KEYS},
                traj_id=rec["TrajId"],
                segment_ordinal=int(rec["SegmentOrdinal"]),
                **{m.alias: _parse_cell(m.kind, rec[m.name]) for m in MEASURES},
                factId=int(rec["factId"]),
            )
            wh.facts.append(row)
            wh._natural[row.natural_key] = row.factId
        return wh

    @staticmethod
    def exists(directory: str | Path) -> bool:
        directory = Path(directory)
        return all((directory / n).is_file() for n in table_file_names())


def table_file_names() -> list[str]:
    return [FACT_TABLE + ".csv"] + [s.file_name for s in DIMENSIONS.values()]


def schema_descriptor() -> dict:
    """Machine-readable listing of dimensions, levels, attributes and measures."""
    dims = []
    for name in sorted(DIMENSIONS):
        s = DIMENSIONS[name]
        dims.append({
            "name": s.name,
            "table": s.table,
            "key": s.key,
            "levels": [{"level": lvl, "attribute": s.level_attribute(lvl).name}
                       for lvl, _ in s.levels],
            "attributes": [{"name": a.name, "alias": a.alias, "type": a.kind}
                           for a in s.attributes],
        })
    return {
        "dimensions": dims,
        "fact": {
            "table": FACT_TABLE,
            "grain": "one row per semantic segment (episode)",
            "keys": ["factId", *FACT_KEYS],
            "natural_key": [a.name for a in FACT_DEGENERATE],
            "measures": [{"name": m.name, "alias": m.alias, "type": m.kind} for m in MEASURES],
            "derived_measures": [dict(d) for d in DERIVED_MEASURES],
        },
    }


def dump_schema_descriptor(desc: dict) -> str:
    return json.dumps(desc, indent=2, sort_keys=True) + "\n"


def parse_schema_descriptor(text: str) -> dict:
    desc = json.loads(text)
    if not isinstance(desc, dict) or set(desc) != {"dimensions", "fact"}:
        raise SchemaMismatch("descriptor must hold exactly 'dimensions' and 'fact'")
    for d in desc["dimensions"]:
        missing = {"name", "table", "key", "levels", "attributes"} - set(d)
        if missing:
            raise SchemaMismatch(f"dimension entry missing {sorted(missing)}")
    missing = {"table", "keys", "measures", "derived_measures"} - set(desc["fact"])
    if missing:
        raise SchemaMismatch(f"fact entry missing {sorted(missing)}")
    return desc
