"""Geodetic and planar geometry helpers.

Coordinates are WGS84 degrees. Distances use a spherical earth of radius
``EARTH_RADIUS_M``; containment is evaluated in the planar (lon, lat) frame,
which is what an SRID 4326 ``ST_Within`` does as well.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

EARTH_RADIUS_M = 6_371_000.0

# absolute tolerance (degrees) for the on-edge test
_EDGE_EPS = 1e-12


class GeometryError(ValueError):
    """Base class for geometry construction and parsing errors."""


class InvalidCoordinate(GeometryError):
    pass


class MalformedWkt(GeometryError):
    pass


class OpenRing(GeometryError):
    pass


class TooFewVertices(GeometryError):
    pass


@dataclass(frozen=True, order=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise InvalidCoordinate(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise InvalidCoordinate(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise InvalidCoordinate(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    def to_wkt(self) -> str:
        return f"POINT({_fmt(self.lon)} {_fmt(self.lat)})"


@dataclass(frozen=True)
class BoundingBox:
    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float

    def __post_init__(self):
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise GeometryError(f"inverted bounding box {self}")

    @classmethod
    def of(cls, points: Iterable[GeoPoint]) -> "BoundingBox":
        pts = list(points)
        if not pts:
            raise GeometryError("bounding box of no points")
        lats = [p.lat for p in pts]
        lons = [p.lon for p in pts]
        return cls(min(lats), max(lats), min(lons), max(lons))

    def contains(self, p: GeoPoint) -> bool:
        return (self.min_lat <= p.lat <= self.max_lat
                and self.min_lon <= p.lon <= self.max_lon)


@dataclass(frozen=True)
class Polygon:
    """Single exterior ring, closed, SRID 4326. Holes are not supported."""

    exterior: tuple[GeoPoint, ...]
    srid: int = 4326

    def __post_init__(self):
        ring = tuple(self.exterior)
        object.__setattr__(self, "exterior", ring)
        if self.srid != 4326:
            raise GeometryError(f"unsupported SRID {self.srid}")
        if len(ring) < 2 or ring[0] != ring[-1]:
            raise OpenRing("polygon ring is not closed (first vertex != last vertex)")
        if len(set(ring[:-1])) < 3 or len(ring) < 4:
            raise TooFewVertices("polygon ring needs at least 3 distinct vertices")

    @property
    def bbox(self) -> BoundingBox:
        return BoundingBox.of(self.exterior)

    def to_wkt(self) -> str:
        coords = ", ".join(f"{_fmt(p.lon)} {_fmt(p.lat)}" for p in self.exterior)
        return f"POLYGON(({coords}))"


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips; strip a trailing ".0"
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    if a == b:
        return 0.0
    # order the operands so that d(a, b) and d(b, a) are bit-identical
    if (b.lat, b.lon) < (a.lat, a.lon):
        a, b = b, a
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def path_length(points: Sequence[GeoPoint]) -> float:
    return sum(haversine_distance(p, q) for p, q in zip(points, points[1:]))


def _on_segment(px, py, ax, ay, bx, by) -> bool:
    if not (min(ax, bx) - _EDGE_EPS <= px <= max(ax, bx) + _EDGE_EPS
            and min(ay, by) - _EDGE_EPS <= py <= max(ay, by) + _EDGE_EPS):
        return False
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    scale = max(abs(bx - ax), abs(by - ay), 1.0)
    return abs(cross) <= _EDGE_EPS * scale


def point_in_polygon(p: GeoPoint, poly: Polygon) -> bool:
    """Ray casting in the (lon, lat) plane; points on the ring count as inside."""
    x, y = p.lon, p.lat
    ring = poly.exterior
    inside = False
    for a, b in zip(ring, ring[1:]):
        ax, ay, bx, by = a.lon, a.lat, b.lon, b.lat
        if _on_segment(x, y, ax, ay, bx, by):
            return True
        if (ay > y) != (by > y):
            x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
            if x < x_cross:
                inside = not inside
    return inside


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_POLY_RE = re.compile(r"^\s*POLYGON\s*\(\s*\((?P<body>[^()]*)\)\s*\)\s*$", re.IGNORECASE)
_POINT_RE = re.compile(rf"^\s*POINT\s*\(\s*(?P<x>{_NUM})\s+(?P<y>{_NUM})\s*\)\s*$", re.IGNORECASE)
_PAIR_RE = re.compile(rf"^\s*(?P<x>{_NUM})\s+(?P<y>{_NUM})\s*$")


def parse_wkt_polygon(text: str) -> Polygon:
    """Parse ``POLYGON((lon lat, lon lat, ...))`` with a single ring."""
    if not isinstance(text, str):
        raise MalformedWkt(f"expected WKT text, got {type(text).__name__}")
    if text.count("(") != text.count(")"):
        raise MalformedWkt("unbalanced parentheses")
    m = _POLY_RE.match(text)
    if m is None:
        head = text.strip().split("(", 1)[0].strip().upper()
        if head and head != "POLYGON":
            raise MalformedWkt(f"unsupported geometry keyword {head!r}")
        raise MalformedWkt("expected POLYGON((x y, ...)) with exactly one ring")
    vertices = []
    for raw in m.group("body").split(","):
        pair = _PAIR_RE.match(raw)
        if pair is None:
            raise MalformedWkt(f"bad coordinate pair {raw.strip()!r}")
        lon, lat = float(pair.group("x")), float(pair.group("y"))
        try:
            vertices.append(GeoPoint(lat=lat, lon=lon))
        except InvalidCoordinate as exc:
            raise MalformedWkt(str(exc)) from None
    return Polygon(tuple(vertices))


def parse_wkt_point(text: str) -> GeoPoint:
    m = _POINT_RE.match(text) if isinstance(text, str) else None
    if m is None:
        raise MalformedWkt(f"expected POINT(x y), got {text!r}")
    try:
        return GeoPoint(lat=float(m.group("y")), lon=float(m.group("x")))
    except InvalidCoordinate as exc:
        raise MalformedWkt(str(exc)) from None


def parse_wkt(text: str) -> GeoPoint | Polygon:
    head = text.lstrip()[:5].upper()
    if head == "POINT":
        return parse_wkt_point(text)
    return parse_wkt_polygon(text)


def bbox_area(box: BoundingBox) -> float:
    """Equirectangular area of a lat/lon box in square meters."""
    k = math.pi * EARTH_RADIUS_M / 180.0
    dlat = box.max_lat - box.min_lat
    dlon = box.max_lon - box.min_lon
    mid = math.radians((box.max_lat + box.min_lat) / 2.0)
    return dlat * k * dlon * k * math.cos(mid)


def centroid(points: Sequence[GeoPoint]) -> GeoPoint:
    """Arithmetic mean of coordinates; adequate for stop-sized clusters."""
    n = len(points)
    return GeoPoint(lat=math.fsum(p.lat for p in points) / n,
                    lon=math.fsum(p.lon for p in points) / n)
