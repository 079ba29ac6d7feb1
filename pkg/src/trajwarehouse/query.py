"""Query engine over the star schema.

A query filters the fact table joined to all five dimensions, then either
projects columns (``select``) or groups and aggregates. Output rows are
always totally ordered, so a warehouse snapshot has exactly one answer per
query.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from .geo import GeometryError, GeoPoint, Polygon, parse_wkt, parse_wkt_polygon, point_in_polygon
from .warehouse import (
    DIMENSIONS,
    FACT_DEGENERATE,
    FACT_KEYS,
    FLOAT,
    GEOMETRY,
    INT,
    MEASURES,
    UNKNOWN,
    Warehouse,
    dimension_schema,
)

AGGREGATE_FNS = ("COUNT", "SUM", "AVG", "MIN", "MAX", "COUNT_DISTINCT")
KMH_PER_MPS = 3.6


class QueryError(Exception):
    pass


class UnknownAttribute(QueryError):
    pass


class TypeMismatch(QueryError):
    pass


class InvalidQuery(QueryError):
    pass


class InvalidParameter(QueryError):
    pass


class NonRollableAggregate(QueryError):
    pass


class NotAncestorLevel(QueryError):
    pass


# ---------------------------------------------------------------------------
# column registry


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    source: str  # "fact" or a dimension name


def _build_registry() -> tuple[dict[str, Column], dict[str, str]]:
    columns: dict[str, Column] = {"factId": Column("factId", INT, "fact")}
    for key in FACT_KEYS:
        columns[key] = Column(key, INT, "fact")
    aliases: dict[str, str] = {}
    for a in FACT_DEGENERATE + MEASURES:
        columns[a.name] = Column(a.name, a.kind, "fact")
        aliases[a.alias] = a.name
    for dim in DIMENSIONS.values():
        for a in dim.attributes:
            columns[a.name] = Column(a.name, a.kind, dim.name)
            aliases[a.alias] = a.name
    for name in columns:
        aliases[name] = name
    return columns, aliases


COLUMNS, _ALIASES = _build_registry()


def resolve_attribute(name: str) -> str:
    try:
        return _ALIASES[name]
    except (KeyError, TypeError):
        raise UnknownAttribute(f"unknown attribute {name!r}") from None


def joined_view(wh: Warehouse) -> list[dict[str, Any]]:
    """Fact rows joined to every dimension through their surrogate keys."""
    rows = []
    key_dims = [(s.key, wh.dimensions[name]) for name, s in DIMENSIONS.items()]
    for f in wh.facts:
        row = {"factId": f.factId, "TrajId": f.traj_id, "SegmentOrdinal": f.segment_ordinal}
        for key, table in key_dims:
            k = getattr(f, key)
            row[key] = k
            row.update(table.member(k))
        for m in MEASURES:
            row[m.name] = getattr(f, m.alias)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# predicates


def _coerce(col: Column, value):
    if value is None:
        return None
    try:
        if col.kind == INT:
            return int(value)
        if col.kind == FLOAT:
            return float(value)
    except (TypeError, ValueError):
        raise TypeMismatch(f"{col.name} is {col.kind}; cannot compare with {value!r}") from None
    return str(value)


@dataclass(frozen=True)
class Eq:
    attribute: str
    value: Any
    negate: bool = False

    def bind(self) -> "Eq":
        col = COLUMNS[resolve_attribute(self.attribute)]
        if col.kind == GEOMETRY:
            raise TypeMismatch(f"{col.name} is geometry; use a within predicate")
        return Eq(col.name, _coerce(col, self.value), self.negate)

    def __call__(self, row) -> bool:
        v = row[self.attribute]
        if v is None:
            return False
        return (v != self.value) if self.negate else (v == self.value)


def Ne(attribute: str, value: Any) -> Eq:
    return Eq(attribute, value, negate=True)


@dataclass(frozen=True)
class Between:
    attribute: str
    low: Any
    high: Any

    def bind(self) -> "Between":
        col = COLUMNS[resolve_attribute(self.attribute)]
        if col.kind not in (INT, FLOAT):
            raise TypeMismatch(f"BETWEEN needs a numeric attribute; {col.name} is {col.kind}")
        return Between(col.name, _coerce(col, self.low), _coerce(col, self.high))

    def __call__(self, row) -> bool:
        v = row[self.attribute]
        return v is not None and self.low <= v <= self.high


@dataclass(frozen=True)
class LessThan:
    attribute: str
    threshold: float

    def bind(self) -> "LessThan":
        col = COLUMNS[resolve_attribute(self.attribute)]
        if col.kind not in (INT, FLOAT):
            raise TypeMismatch(f"'<' needs a numeric attribute; {col.name} is {col.kind}")
        try:
            threshold = float(self.threshold)
        except (TypeError, ValueError):
            raise TypeMismatch(f"threshold {self.threshold!r} is not a number") from None
        return LessThan(col.name, threshold)

    def __call__(self, row) -> bool:
        v = row[self.attribute]
        return v is not None and v < self.threshold


@dataclass(frozen=True)
class Within:
    attribute: str
    polygon: Polygon

    def bind(self) -> "Within":
        col = COLUMNS[resolve_attribute(self.attribute)]
        if col.kind != GEOMETRY:
            raise TypeMismatch(f"within needs a geometry attribute; {col.name} is {col.kind}")
        poly = self.polygon
        if isinstance(poly, str):
            try:
                poly = parse_wkt_polygon(poly)
            except GeometryError as exc:
                raise TypeMismatch(f"bad polygon for within: {exc}") from None
        return Within(col.name, poly)


Predicate = Union[Eq, Between, LessThan, Within]


@lru_cache(maxsize=65536)
def _geometry(text: str):
    return parse_wkt(text)


def geometry_within(value: Optional[str], poly: Polygon) -> bool:
    """POINT: point-in-polygon. POLYGON: every vertex inside."""
    if value is None:
        return False
    try:
        geom = _geometry(value)
    except GeometryError:
        return False
    box = poly.bbox
    vertices = (geom,) if isinstance(geom, GeoPoint) else geom.exterior
    if not all(box.contains(p) for p in vertices):
        return False
    return all(point_in_polygon(p, poly) for p in vertices)


def spatial_within_filter(rows: Iterable[Mapping], attribute: str, poly: Polygon) -> list:
    col = COLUMNS[resolve_attribute(attribute)]
    if col.kind != GEOMETRY:
        raise TypeMismatch(f"{col.name} is not geometry-valued")
    return [r for r in rows if geometry_within(r[col.name], poly)]


# ---------------------------------------------------------------------------
# query specs


@dataclass(frozen=True)
class Aggregate:
    fn: str
    target: str = "*"

    def bind(self) -> "Aggregate":
        fn = str(self.fn).upper()
        if fn not in AGGREGATE_FNS:
            raise InvalidQuery(f"unknown aggregate {self.fn!r}")
        if self.target == "*":
            if fn != "COUNT":
                raise InvalidQuery(f"{fn}(*) is not defined")
            return Aggregate(fn, "*")
        col = COLUMNS[resolve_attribute(self.target)]
        if fn in ("SUM", "AVG") and col.kind not in (INT, FLOAT):
            raise TypeMismatch(f"{fn} needs a numeric attribute; {col.name} is {col.kind}")
        if fn in ("MIN", "MAX") and col.kind == GEOMETRY:
            raise TypeMismatch(f"{fn} is undefined for geometry {col.name}")
        return Aggregate(fn, col.name)

    @property
    def column(self) -> str:
        return f"{self.fn}({self.target})"


def _parse_aggregate_name(name: str) -> Optional[Aggregate]:
    if name.endswith(")") and "(" in name:
        fn, target = name[:-1].split("(", 1)
        return Aggregate(fn.strip(), target.strip()).bind()
    return None


@dataclass(frozen=True)
class QuerySpec:
    filters: tuple = ()
    group_by: tuple[str, ...] = ()
    aggregates: tuple[Aggregate, ...] = ()
    argmax_count: bool = False
    order_by: tuple[str, ...] = ()
    select: tuple[str, ...] = ()
    distinct: bool = False

    def __post_init__(self):
        for name in ("filters", "group_by", "aggregates", "order_by", "select"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def bind(self) -> "QuerySpec":
        if self.select and (self.group_by or self.aggregates or self.argmax_count):
            raise InvalidQuery("select cannot be combined with group_by/aggregates/argmax_count")
        filters = tuple(p.bind() for p in self.filters)
        group_by = tuple(resolve_attribute(g) for g in self.group_by)
        select = tuple(resolve_attribute(s) for s in self.select)
        aggregates = tuple(a.bind() for a in self.aggregates)
        if len({a.column for a in aggregates}) != len(aggregates):
            raise InvalidQuery("duplicate aggregate")
        out_cols = list(select) if select else list(group_by) + [a.column for a in aggregates]
        order_by = []
        for key in self.order_by:
            desc = key.startswith("-")
            name = key[1:] if desc else key
            agg = _parse_aggregate_name(name)
            col = agg.column if agg else resolve_attribute(name)
            if col not in out_cols:
                raise UnknownAttribute(f"order_by column {name!r} is not in the output")
            order_by.append(("-" if desc else "") + col)
        return QuerySpec(filters, group_by, aggregates, self.argmax_count,
                         tuple(order_by), select, self.distinct)

    # JSON form

    @classmethod
    def from_dict(cls, doc: Mapping) -> "QuerySpec":
        allowed = {"filters", "group_by", "aggregates", "argmax_count", "having",
                   "order_by", "select", "distinct"}
        extra = set(doc) - allowed
        if extra:
            raise InvalidQuery(f"unknown query fields {sorted(extra)}")
        having = doc.get("having") or {}
        return cls(
            filters=tuple(predicate_from_dict(f) for f in doc.get("filters", ())),
            group_by=tuple(doc.get("group_by", ())),
            aggregates=tuple(Aggregate(a["fn"], a.get("target", "*"))
                             for a in doc.get("aggregates", ())),
            argmax_count=bool(doc.get("argmax_count", having.get("argmax_count", False))),
            order_by=tuple(doc.get("order_by", ())),
            select=tuple(doc.get("select", ())),
            distinct=bool(doc.get("distinct", False)),
        )

    @classmethod
    def from_json(cls, text: str) -> "QuerySpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidQuery(f"query spec is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise InvalidQuery("query spec must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "filters": [predicate_to_dict(p) for p in self.filters],
            "group_by": list(self.group_by),
            "aggregates": [{"fn": a.fn, "target": a.target} for a in self.aggregates],
            "argmax_count": self.argmax_count,
            "order_by": list(self.order_by),
            "select": list(self.select),
            "distinct": self.distinct,
        }


def predicate_from_dict(doc: Mapping) -> Predicate:
    try:
        op = str(doc["op"]).lower()
        attr = doc["attribute"]
        if op in ("=", "==", "eq"):
            return Eq(attr, doc["value"])
        if op in ("!=", "<>", "ne"):
            return Ne(attr, doc["value"])
        if op == "between":
            return Between(attr, doc["low"], doc["high"])
        if op in ("<", "lt"):
            return LessThan(attr, doc["value"])
        if op in ("within", "spatial_within"):
            return Within(attr, doc["polygon"])
    except (KeyError, TypeError) as exc:
        raise InvalidQuery(f"malformed filter {doc!r}: missing {exc}") from None
    raise InvalidQuery(f"unknown filter op {doc.get('op')!r}")


def predicate_to_dict(p: Predicate) -> dict:
    if isinstance(p, Eq):
        return {"op": "!=" if p.negate else "=", "attribute": p.attribute, "value": p.value}
    if isinstance(p, Between):
        return {"op": "between", "attribute": p.attribute, "low": p.low, "high": p.high}
    if isinstance(p, LessThan):
        return {"op": "<", "attribute": p.attribute, "value": p.threshold}
    poly = p.polygon.to_wkt() if isinstance(p.polygon, Polygon) else p.polygon
    return {"op": "within", "attribute": p.attribute, "polygon": poly}


# ---------------------------------------------------------------------------
# results


def sort_key(value):
    if value is None:
        return (0, 0)
    if isinstance(value, str):
        return (2, value)
    return (1, value)


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[tuple]
    group_columns: list[str] = field(default_factory=list)
    aggregates: list[Aggregate] = field(default_factory=list)
    argmax_count: bool = False
    # exact SUM partials per row, for re-aggregation
    partials: list[dict[str, Any]] = field(default_factory=list)

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_cell(v) for v in row])
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [self.columns] + [[format_cell(v) for v in r] for r in self.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.columns))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append(f"({len(self.rows)} rows)")
        return "\n".join(lines) + "\n"


def _order(rows: list[tuple], columns: list[str], order_by: Sequence[str],
           partials: list | None = None) -> tuple[list[tuple], list]:
    idx = list(range(len(rows)))
    idx.sort(key=lambda i: tuple(sort_key(v) for v in rows[i]))
    for key in reversed(order_by):
        desc = key.startswith("-")
        c = columns.index(key[1:] if desc else key)
        idx.sort(key=lambda i: sort_key(rows[i][c]), reverse=desc)
    return [rows[i] for i in idx], [partials[i] for i in idx] if partials else []


def _aggregate(agg: Aggregate, group: list[Mapping]):
    """Returns (cell value, exact partial or None)."""
    if agg.target == "*":
        return len(group), None
    values = [r[agg.target] for r in group if r[agg.target] is not None]
    if agg.fn == "COUNT":
        return len(values), None
    if agg.fn == "COUNT_DISTINCT":
        return len(set(values)), None
    if not values:
        return None, None
    if agg.fn == "MIN":
        return min(values), None
    if agg.fn == "MAX":
        return max(values), None
    if COLUMNS[agg.target].kind == INT:
        total = sum(values)
        if agg.fn == "SUM":
            return total, total
        return total / len(values), None
    total = math.fsum(values)
    if agg.fn == "SUM":
        return total, sum(map(Fraction, values), Fraction(0))
    return total / len(values), None


def filter_rows(rows: Iterable[Mapping], predicates: Sequence[Predicate]) -> list:
    out = list(rows)
    for p in predicates:
        if isinstance(p, Within):
            out = spatial_within_filter(out, p.attribute, p.polygon)
        else:
            out = [r for r in out if p(r)]
    return out


def execute(wh: Warehouse, q: QuerySpec, view: list | None = None) -> ResultTable:
    q = q.bind()
    rows = filter_rows(view if view is not None else joined_view(wh), q.filters)

    if q.select:
        columns = list(q.select)
        out = [tuple(r[c] for c in columns) for r in rows]
        if q.distinct:
            out = list(set(out))
        out, _ = _order(out, columns, q.order_by)
        return ResultTable(columns, out)

    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault(tuple(r[c] for c in q.group_by), []).append(r)
    if q.argmax_count and groups:
        top = max(len(g) for g in groups.values())
        groups = {k: g for k, g in groups.items() if len(g) == top}

    columns = list(q.group_by) + [a.column for a in q.aggregates]
    out, partials = [], []
    for key, group in groups.items():
        cells, exact = list(key), {}
        for a in q.aggregates:
            value, partial = _aggregate(a, group)
            cells.append(value)
            if partial is not None:
                exact[a.column] = partial
        out.append(tuple(cells))
        partials.append(exact)
    out, partials = _order(out, columns, q.order_by, partials)
    return ResultTable(columns, out, list(q.group_by), list(q.aggregates),
                       q.argmax_count, partials)


# ---------------------------------------------------------------------------
# roll-up


def rollup(result: ResultTable, dim: str, from_level: str, to_level: str) -> ResultTable:
    """Re-aggregate ``result`` from ``from_level`` up to the coarser ``to_level``.

    The result must be grouped by both levels' attributes; every group column
    of ``dim`` below ``to_level`` is dropped. AVG is rebuilt from a carried
    SUM and COUNT of the same target.
    """
    schema = dimension_schema(dim)
    levels = [lvl for lvl, _ in schema.levels]
    for lvl in (from_level, to_level):
        if lvl not in levels:
            raise NotAncestorLevel(f"{lvl!r} is not a level of {dim}")
    if levels.index(to_level) >= levels.index(from_level):
        raise NotAncestorLevel(f"{to_level!r} is not an ancestor of {from_level!r} in {dim}")
    if result.argmax_count:
        raise NonRollableAggregate("argmax-filtered results cannot be rolled up")
    from_col = schema.level_attribute(from_level).name
    to_col = schema.level_attribute(to_level).name
    for col in (from_col, to_col):
        if col not in result.group_columns:
            raise NotAncestorLevel(f"result is not grouped by {col}")

    below = {schema.level_attribute(lvl).name for lvl in levels[levels.index(to_level) + 1:]}
    keep = [c for c in result.group_columns if c not in below]

    by_col = {a.column: a for a in result.aggregates}
    for a in result.aggregates:
        if a.fn == "COUNT_DISTINCT":
            raise NonRollableAggregate(f"{a.column} cannot be re-aggregated")
        if a.fn == "AVG":
            has_sum = f"SUM({a.target})" in by_col
            has_count = f"COUNT({a.target})" in by_col or (
                "COUNT(*)" in by_col and COLUMNS[a.target].source == "fact")
            if not (has_sum and has_count):
                raise NonRollableAggregate(
                    f"{a.column} needs SUM({a.target}) and COUNT({a.target}) in the result")

    col_idx = {c: i for i, c in enumerate(result.columns)}
    groups: dict[tuple, list[int]] = {}
    for i, row in enumerate(result.rows):
        groups.setdefault(tuple(row[col_idx[c]] for c in keep), []).append(i)

    columns = keep + [a.column for a in result.aggregates]
    out, partials = [], []
    for key, members in groups.items():
        sums: dict[str, Any] = {}
        counts: dict[str, int] = {}
        cells = list(key)
        exact_row = {}
        for a in result.aggregates:
            if a.fn in ("COUNT", "SUM"):
                vals = [result.rows[i][col_idx[a.column]] for i in members]
                if a.fn == "COUNT":
                    counts[a.column] = sum(vals)
                else:
                    parts = [result.partials[i].get(a.column) for i in members]
                    parts = [p for p in parts if p is not None]
                    if not parts:
                        sums[a.column] = (None, None)
                    elif all(isinstance(p, int) for p in parts):
                        sums[a.column] = (sum(parts), sum(parts))
                    else:
                        exact = sum(parts, Fraction(0))
                        sums[a.column] = (float(exact), exact)
        for a in result.aggregates:
            vals = [result.rows[i][col_idx[a.column]] for i in members]
            present = [v for v in vals if v is not None]
            if a.fn == "COUNT":
                cells.append(counts[a.column])
            elif a.fn == "SUM":
                value, exact = sums[a.column]
                cells.append(value)
                if exact is not None:
                    exact_row[a.column] = exact
            elif a.fn == "MIN":
                cells.append(min(present) if present else None)
            elif a.fn == "MAX":
                cells.append(max(present) if present else None)
            else:  # AVG
                total = sums[f"SUM({a.target})"][0]
                n = counts.get(f"COUNT({a.target})", counts.get("COUNT(*)"))
                cells.append(None if total is None or not n else total / n)
        out.append(tuple(cells))
        partials.append(exact_row)
    out, partials = _order(out, columns, (), partials)
    return ResultTable(columns, out, keep, list(result.aggregates), False, partials)


# ---------------------------------------------------------------------------
# canned domain queries

Q2_COLUMNS = ("TrajectoryModelName", "TrajectoryModelBehaviourName",
              "TrajModelBehaviourMovementVelocity", "TrajectoryTransportationModeName",
              "TrajectoryTransportationTypeName")
Q3_COLUMNS = ("AverageTrajectorySpeed", "TrajectoryModelName", "TrajectoryModelFeature",
              "TrajModelBehaviourMovementVelocity", "EventEnvironmentType",
              "EventEnvironmentCharac")
Q4_COLUMNS = ("TrajSegmentSemanticStartPoint", "TrajSegmentSemanticEndPoint",
              "AverageTrajectorySpeed", "TrajectoryModelName", "EventItemName",
              "EventActivityName")


def _require(params: Mapping, *names):
    missing = [n for n in names if params.get(n) in (None, "")]
    if missing:
        raise InvalidParameter(f"missing query parameters {missing}")
    return [params[n] for n in names]


def _polygon_param(value) -> Polygon:
    if isinstance(value, Polygon):
        return value
    try:
        return parse_wkt_polygon(value)
    except GeometryError as exc:
        raise InvalidParameter(f"bad polygon parameter: {exc}") from None


def poi_footprint(wh: Warehouse, landmark_name: str) -> Polygon:
    """Footprint stored in the geographical dimension for a named landmark."""
    geo = wh.dimensions["geographical"]
    found = {m["GeoObjectType"] for m in map(geo.member, range(len(geo)))
             if m["LandmarkObjectName"] == landmark_name and m["GeoObjectType"]}
    polys = sorted(t for t in found if t.lstrip().upper().startswith("POLYGON"))
    if not polys:
        raise InvalidParameter(f"no semantic stop named {landmark_name!r} in the warehouse")
    if len(polys) > 1:
        raise InvalidParameter(f"landmark name {landmark_name!r} has several footprints")
    return parse_wkt_polygon(polys[0])


def canned_spec(wh: Warehouse, qid: str, params: Mapping) -> QuerySpec:
    qid = qid.upper()
    if qid == "Q1":
        season, poly = _require(params, "season", "polygon")
        return QuerySpec(
            filters=(Eq("CalendarSeason", season),
                     Within("GeoObjectType", _polygon_param(poly)),
                     Ne("EventItemName", UNKNOWN)),
            group_by=("EventItemName", "EventGoalName"),
            argmax_count=True,
        )
    if qid == "Q2":
        season, poly = _require(params, "season", "polygon")
        return QuerySpec(
            filters=(Eq("CalendarSeason", season), Within("GeoObjectType", _polygon_param(poly))),
            select=Q2_COLUMNS,
            distinct=True,
        )
    if qid == "Q3":
        start, end = _require(params, "start_poi", "end_poi")
        if start == end:
            raise InvalidParameter("Q3 needs two distinct semantic stops")
        return QuerySpec(
            filters=(Within("TrajSegmentSemanticStartPoint", poi_footprint(wh, start)),
                     Within("TrajSegmentSemanticEndPoint", poi_footprint(wh, end))),
            select=Q3_COLUMNS,
        )
    if qid == "Q4":
        speed, y0, y1 = _require(params, "speed_kmh", "year_from", "year_to")
        try:
            threshold = float(speed) / KMH_PER_MPS
        except (TypeError, ValueError):
            raise InvalidParameter(f"speed_kmh {speed!r} is not a number") from None
        return QuerySpec(
            filters=(LessThan("AverageTrajectorySpeed", threshold),
                     Between("CalendarYear", y0, y1)),
            select=Q4_COLUMNS,
        )
    raise InvalidParameter(f"unknown canned query {qid!r}; expected Q1..Q4")


def canned_query(wh: Warehouse, qid: str, params: Mapping) -> ResultTable:
    return execute(wh, canned_spec(wh, qid, params))
