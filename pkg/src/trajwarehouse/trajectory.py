"""Raw trajectories and their segmentation into Stop/Move episodes."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional, Sequence

from .geo import BoundingBox, GeoPoint, centroid, haversine_distance, path_length


class TrajectoryError(ValueError):
    pass


class EmptyTrajectory(TrajectoryError):
    pass


class NonMonotonicTime(TrajectoryError):
    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"timestamp at index {index} does not increase")


class IndexOutOfRange(TrajectoryError):
    pass


class ShortTrajectoryWarning(UserWarning):
    """Trajectory has fewer than two points; no episodes can be built."""


@dataclass(frozen=True)
class TimedPoint:
    point: GeoPoint
    t: datetime

    def __post_init__(self):
        t = self.t
        if not isinstance(t, datetime):
            raise TypeError(f"timestamp must be a datetime, got {type(t).__name__}")
        t = t.replace(tzinfo=timezone.utc) if t.tzinfo is None else t.astimezone(timezone.utc)
        object.__setattr__(self, "t", t.replace(microsecond=0))


@dataclass(frozen=True)
class RawTrajectory:
    traj_id: str
    object_id: str
    points: tuple[TimedPoint, ...]

    @property
    def span_s(self) -> float:
        return (self.points[-1].t - self.points[0].t).total_seconds()


@dataclass(frozen=True)
class SegmentationParams:
    eps_meters: float = 50.0
    min_stop_duration_s: float = 300.0

    def __post_init__(self):
        if not self.eps_meters > 0:
            raise ValueError(f"eps_meters must be positive, got {self.eps_meters}")
        if not self.min_stop_duration_s >= 0:
            raise ValueError(f"min_stop_duration_s must be >= 0, got {self.min_stop_duration_s}")


class EpisodeKind(str, enum.Enum):
    STOP = "Stop"
    MOVE = "Move"


@dataclass(frozen=True)
class Episode:
    kind: EpisodeKind
    start_index: int
    end_index: int
    t_begin: datetime
    t_end: datetime
    bbox: BoundingBox
    centroid: Optional[GeoPoint] = None

    @property
    def is_stop(self) -> bool:
        return self.kind is EpisodeKind.STOP

    @property
    def duration_s(self) -> float:
        return (self.t_end - self.t_begin).total_seconds()


@dataclass(frozen=True)
class EpisodeStats:
    duration_s: float
    travel_distance_m: float
    avg_speed_mps: float
    num_points: int


def validate_raw_trajectory(traj_id, object_id, points: Sequence[TimedPoint]) -> RawTrajectory:
    """Check Def.-3 style ordering and wrap the points.

    Raises EmptyTrajectory, NonMonotonicTime (with the first offending index)
    or InvalidCoordinate (from GeoPoint) for bad input.
    """
    pts = tuple(points)
    if not pts:
        raise EmptyTrajectory(f"trajectory {traj_id!r} has no points")
    for k, tp in enumerate(pts):
        if not isinstance(tp, TimedPoint):
            raise TypeError(f"point {k} is not a TimedPoint")
        if k and tp.t <= pts[k - 1].t:
            raise NonMonotonicTime(k, f"trajectory {traj_id!r}: timestamp at index {k} "
                                      f"({tp.t.isoformat()}) is not after index {k - 1}")
    return RawTrajectory(str(traj_id), str(object_id), pts)


def _fits(points: Sequence[GeoPoint], eps: float) -> bool:
    c = centroid(points)
    return all(haversine_distance(p, c) <= eps for p in points)


def _stop_spans(traj: RawTrajectory, params: SegmentationParams) -> list[tuple[int, int]]:
    pts = [tp.point for tp in traj.points]
    times = [tp.t for tp in traj.points]
    m = len(pts)
    spans = []
    i = 0
    while i < m:
        j = i
        while j + 1 < m and _fits(pts[i:j + 2], params.eps_meters):
            j += 1
        # a stop needs a non-empty time interval, hence at least two points
        if j > i and (times[j] - times[i]).total_seconds() >= params.min_stop_duration_s:
            spans.append((i, j))
        i = j + 1
    return spans


def _episode(traj: RawTrajectory, kind: EpisodeKind, s: int, e: int) -> Episode:
    members = [tp.point for tp in traj.points[s:e + 1]]
    return Episode(
        kind=kind,
        start_index=s,
        end_index=e,
        t_begin=traj.points[s].t,
        t_end=traj.points[e].t,
        bbox=BoundingBox.of(members),
        centroid=centroid(members) if kind is EpisodeKind.STOP else None,
    )


def segment_episodes(traj: RawTrajectory, params: SegmentationParams | None = None) -> list[Episode]:
    """Split a trajectory into alternating Stop and Move episodes.

    Candidate stops are grown from an anchor while every member stays within
    ``eps_meters`` of the running centroid; a candidate shorter than
    ``min_stop_duration_s`` is folded into the surrounding move and the anchor
    jumps past it. Adjacent episodes share their boundary point.
    """
    params = params or SegmentationParams()
    m = len(traj.points)
    if m < 2:
        warnings.warn(f"trajectory {traj.traj_id!r} has {m} point(s); no episodes",
                      ShortTrajectoryWarning, stacklevel=2)
        return []

    episodes = []
    cursor = 0
    for s, e in _stop_spans(traj, params):
        if s > cursor:
            episodes.append(_episode(traj, EpisodeKind.MOVE, cursor, s))
        episodes.append(_episode(traj, EpisodeKind.STOP, s, e))
        cursor = e
    if cursor < m - 1 or not episodes:
        episodes.append(_episode(traj, EpisodeKind.MOVE, cursor, m - 1))
    return episodes


def episode_stats(traj: RawTrajectory, ep: Episode) -> EpisodeStats:
    m = len(traj.points)
    if not (0 <= ep.start_index <= ep.end_index < m):
        raise IndexOutOfRange(f"episode [{ep.start_index}, {ep.end_index}] outside 0..{m - 1}")
    pts = [tp.point for tp in traj.points[ep.start_index:ep.end_index + 1]]
    duration = (traj.points[ep.end_index].t - traj.points[ep.start_index].t).total_seconds()
    distance = path_length(pts)
    speed = distance / duration if duration > 0 else 0.0
    return EpisodeStats(duration_s=duration, travel_distance_m=distance,
                        avg_speed_mps=speed, num_points=len(pts))
