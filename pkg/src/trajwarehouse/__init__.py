"""Embedded semantic trajectory data warehouse."""

from .geo import GeoPoint, Polygon, haversine_distance, parse_wkt_polygon, point_in_polygon
from .trajectory import RawTrajectory, SegmentationParams, segment_episodes
from .warehouse import Warehouse, hierarchy_levels

__version__ = "0.1.0"
