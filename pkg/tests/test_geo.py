import math
import random

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import arc_length_deg, cosine_law_distance, near_edge, winding_number
from trajwarehouse.geo import (
    BoundingBox,
    GeoPoint,
    InvalidCoordinate,
    MalformedWkt,
    OpenRing,
    Polygon,
    TooFewVertices,
    bbox_area,
    haversine_distance,
    parse_wkt_point,
    parse_wkt_polygon,
    point_in_polygon,
)

Q1_WKT = ("POLYGON((-34.954449 -8.124354, -34.904449 -8.124354, -34.904449 -8.084354, "
          "-34.954449 -8.084354,-34.954449 -8.124354 ))")
UNIT = parse_wkt_polygon("POLYGON((0 0, 1 0, 1 1, 0 1, 0 0))")

# law-of-cosines oracle, frozen
Q1_DIAGONAL_M = 7076.676099373329
# equirectangular area recomputed from arc lengths, frozen
Q1_AREA_M2 = 24481657.363660395
ONE_DEGREE_BOX_M2 = 12363840916.385193


class TestGeoPoint:
    @pytest.mark.parametrize("lat,lon", [(91, 0), (-90.5, 0), (0, 180.01), (math.nan, 0),
                                         (0, math.inf)])
    def test_rejects_out_of_range(self, lat, lon):
        with pytest.raises(InvalidCoordinate):
            GeoPoint(lat, lon)

    def test_wkt_is_lon_first(self):
        assert GeoPoint(-8.1, -34.9).to_wkt() == "POINT(-34.9 -8.1)"
        assert parse_wkt_point("POINT(-34.9 -8.1)") == GeoPoint(-8.1, -34.9)


class TestHaversine:
    def test_identical_points(self):
        assert haversine_distance(GeoPoint(0, 0), GeoPoint(0, 0)) == 0.0

    def test_one_degree_on_equator(self):
        d = haversine_distance(GeoPoint(0, 0), GeoPoint(0, 1))
        assert d == pytest.approx(arc_length_deg(1.0), abs=1e-6)
        assert d == pytest.approx(111194.9, abs=0.1)

    def test_query_region_diagonal(self):
        d = haversine_distance(GeoPoint(-8.124354, -34.954449), GeoPoint(-8.084354, -34.904449))
        assert d == pytest.approx(Q1_DIAGONAL_M, abs=1e-3)

    @given(st.floats(-89, 89), st.floats(-179, 179), st.floats(-89, 89), st.floats(-179, 179))
    def test_symmetric_and_nonnegative(self, la1, lo1, la2, lo2):
        a, b = GeoPoint(la1, lo1), GeoPoint(la2, lo2)
        assert haversine_distance(a, b) == haversine_distance(b, a)
        assert haversine_distance(a, b) >= 0

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=3, max_size=3))
    def test_triangle_inequality_in_patch(self, pts):
        a, b, c = (GeoPoint(45 + x, 7 + y) for x, y in pts)
        ab, bc, ac = (haversine_distance(a, b), haversine_distance(b, c),
                      haversine_distance(a, c))
        assert ac <= ab + bc + 1e-6 * max(ac, 1.0)

    def test_agrees_with_cosine_law(self):
        rng = random.Random(7)
        for _ in range(200):
            lat, lon = rng.uniform(-80, 80), rng.uniform(-175, 175)
            a = GeoPoint(lat, lon)
            b = GeoPoint(lat + rng.uniform(-5, 5), lon + rng.uniform(-5, 5))
            ref = cosine_law_distance(a.lat, a.lon, b.lat, b.lon)
            assert haversine_distance(a, b) == pytest.approx(ref, rel=1e-6)


class TestPointInPolygon:
    def test_center_of_unit_square(self):
        assert point_in_polygon(GeoPoint(0.5, 0.5), UNIT)

    def test_vertex_and_edge_count_as_inside(self):
        assert point_in_polygon(GeoPoint(0, 0), UNIT)
        assert point_in_polygon(GeoPoint(1, 1), UNIT)
        assert point_in_polygon(GeoPoint(0.5, 1.0), UNIT)

    def test_outside(self):
        assert not point_in_polygon(GeoPoint(1.5, 0.5), UNIT)
        assert not point_in_polygon(GeoPoint(-0.0001, 0.5), UNIT)

    def test_query_region(self):
        poly = parse_wkt_polygon(Q1_WKT)
        # rectangle bounds check oracle
        p = GeoPoint(-8.10, -34.93)
        assert -34.954449 <= p.lon <= -34.904449 and -8.124354 <= p.lat <= -8.084354
        assert point_in_polygon(p, poly)
        assert not point_in_polygon(GeoPoint(-8.10, -35.0), poly)

    def test_concave_ring(self):
        # U shape: the notch is outside
        u = parse_wkt_polygon("POLYGON((0 0, 3 0, 3 3, 2 3, 2 1, 1 1, 1 3, 0 3, 0 0))")
        assert not point_in_polygon(GeoPoint(2, 1.5), u)
        assert point_in_polygon(GeoPoint(2, 0.5), u)
        assert point_in_polygon(GeoPoint(2.5, 2.5), u)

    @settings(max_examples=300)
    @given(st.data())
    def test_matches_winding_number_on_convex_quads(self, data):
        cx, cy = data.draw(st.floats(-170, 170)), data.draw(st.floats(-80, 80))
        radii = [data.draw(st.floats(0.1, 5)) for _ in range(4)]
        angles = sorted(data.draw(st.floats(0, 2 * math.pi - 1e-3)) for _ in range(4))
        assume(all(b - a > 0.3 for a, b in zip(angles, angles[1:])))
        ring = [(cx + r * math.cos(a), cy + r * math.sin(a)) for r, a in zip(radii, angles)]
        ring.append(ring[0])
        # only keep convex quads
        crosses = [(b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
                   for a, b, c in zip(ring, ring[1:], ring[2:] + ring[1:2])]
        assume(all(c > 0 for c in crosses))
        poly = Polygon(tuple(GeoPoint(y, x) for x, y in ring))
        px, py = cx + data.draw(st.floats(-6, 6)), cy + data.draw(st.floats(-6, 6))
        assume(-180 <= px <= 180 and -90 <= py <= 90)
        assume(not near_edge(px, py, ring, 1e-9))
        assert point_in_polygon(GeoPoint(py, px), poly) == (winding_number(px, py, ring) != 0)


class TestWkt:
    def test_unit_square(self):
        poly = parse_wkt_polygon("POLYGON((0 0, 1 0, 1 1, 0 1, 0 0))")
        assert len(poly.exterior) == 5
        assert poly.exterior[0] == poly.exterior[-1]

    def test_literal_with_odd_spacing(self):
        poly = parse_wkt_polygon(Q1_WKT)
        assert len(poly.exterior) == 5
        assert poly.exterior[0] == GeoPoint(-8.124354, -34.954449)
        box = poly.bbox
        assert (box.min_lon, box.max_lon) == (-34.954449, -34.904449)
        assert (box.min_lat, box.max_lat) == (-8.124354, -8.084354)

    def test_open_ring(self):
        with pytest.raises(OpenRing):
            parse_wkt_polygon("POLYGON((0 0, 1 0, 1 1))")

    def test_too_few_vertices(self):
        with pytest.raises(TooFewVertices):
            parse_wkt_polygon("POLYGON((0 0, 1 0, 0 0, 0 0))")

    @pytest.mark.parametrize("text", [
        "POLYGON((0 0, 1 0, 1 1, 0 0)",
        "POLYGN((0 0, 1 0, 1 1, 0 0))",
        "POLYGON((0 0, 1 x, 1 1, 0 0))",
        "MULTIPOLYGON(((0 0, 1 0, 1 1, 0 0)))",
        "POLYGON((0 0, 4 0, 4 4, 0 0), (1 1, 2 1, 2 2, 1 1))",
        "POLYGON((0 0 0, 1 0 0, 1 1 0, 0 0 0))",
    ])
    def test_malformed(self, text):
        with pytest.raises(MalformedWkt):
            parse_wkt_polygon(text)

    coord = st.decimals(min_value=-179, max_value=179, places=6).map(float)

    @given(st.lists(st.tuples(coord, coord.filter(lambda v: -89 < v < 89)),
                    min_size=3, max_size=12, unique=True))
    def test_round_trip(self, pairs):
        ring = tuple(GeoPoint(lat, lon) for lon, lat in pairs)
        poly = Polygon(ring + ring[:1])
        again = parse_wkt_polygon(poly.to_wkt())
        assert again.exterior == poly.exterior
        for p in again.exterior:
            assert round(p.lon, 6) == p.lon and round(p.lat, 6) == p.lat


class TestBboxArea:
    def test_degenerate(self):
        assert bbox_area(BoundingBox(1, 1, 2, 2)) == 0.0

    def test_one_degree_at_equator(self):
        assert bbox_area(BoundingBox(0, 1, 0, 1)) == pytest.approx(1.2364e10, abs=1e7)
        assert bbox_area(BoundingBox(0, 1, 0, 1)) == pytest.approx(ONE_DEGREE_BOX_M2, rel=1e-12)

    def test_query_region(self):
        box = parse_wkt_polygon(Q1_WKT).bbox
        assert bbox_area(box) == pytest.approx(Q1_AREA_M2, rel=1e-12)
