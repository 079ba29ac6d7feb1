"""Semantic enrichment: POI/event matching, annotations, social posts."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Iterable, Mapping, Optional, Sequence

from .geo import GeoPoint, Polygon, bbox_area, point_in_polygon
from .trajectory import (
    Episode,
    EpisodeStats,
    RawTrajectory,
    SegmentationParams,
    TimedPoint,
    episode_stats,
    segment_episodes,
)

UNSPECIFIED_GOAL = "unspecified"
NO_MODE = "none"

EXPRESSIVE_THOUGHTS = ("positive", "negative", "indifferent")
CONTENT_KINDS = ("textual", "image")


@dataclass(frozen=True)
class PointOfInterest:
    poi_id: str
    footprint: Polygon
    object_name: str
    object_category: str
    allows_stop: bool = True
    allows_move: bool = False
    semantic_purpose: str = ""
    landmark_attrs: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.allows_stop or self.allows_move):
            raise ValueError(f"POI {self.poi_id!r} allows neither stops nor moves")

    @property
    def area(self) -> float:
        return bbox_area(self.footprint.bbox)


@dataclass(frozen=True)
class EventOfInterest:
    event_id: str
    footprint: Polygon
    event_item_name: str
    goal_name: str
    t_start: datetime
    t_end: datetime
    activity_names: tuple[str, ...] = ()
    env_type: str = ""
    env_characteristics: str = ""

    def __post_init__(self):
        if self.t_start > self.t_end:
            raise ValueError(f"event {self.event_id!r} ends before it starts")
        object.__setattr__(self, "activity_names", tuple(self.activity_names))

    def overlap_s(self, t0: datetime, t1: datetime) -> float:
        lo, hi = max(t0, self.t_start), min(t1, self.t_end)
        return max(0.0, (hi - lo).total_seconds())


@dataclass(frozen=True)
class SocialPost:
    post_id: str
    object_id: str
    t: datetime
    medium_type: str
    account_platform: str
    content_kind: str
    content_text: str
    expressive_thought: str
    qualitative_mood: str
    location: Optional[GeoPoint] = None

    def __post_init__(self):
        if self.expressive_thought not in EXPRESSIVE_THOUGHTS:
            raise ValueError(f"expressive_thought {self.expressive_thought!r} "
                             f"not in {EXPRESSIVE_THOUGHTS}")
        if self.content_kind not in CONTENT_KINDS:
            raise ValueError(f"content_kind {self.content_kind!r} not in {CONTENT_KINDS}")
        if not self.qualitative_mood:
            raise ValueError("qualitative_mood is required")


@dataclass(frozen=True)
class SemanticAnnotation:
    geo_object_property: str = ""
    trajectory_goal: str = UNSPECIFIED_GOAL
    event_ref: Optional[str] = None

    @property
    def is_annotated(self) -> bool:
        return bool(self.geo_object_property or self.event_ref
                    or self.trajectory_goal != UNSPECIFIED_GOAL)

    @property
    def status(self) -> str:
        return "ANNOTATED" if self.is_annotated else "UNANNOTATED"


@dataclass(frozen=True)
class SegmentEnd:
    point: TimedPoint
    poi_id: Optional[str] = None


@dataclass(frozen=True)
class SemanticSegment:
    ordinal: int
    begin: SegmentEnd
    end: SegmentEnd
    episode: Episode
    annotation: SemanticAnnotation
    transport_mode: str
    goal: str
    stats: EpisodeStats
    poi_id: Optional[str] = None
    event_ids: tuple[str, ...] = ()
    posts: tuple[SocialPost, ...] = ()

    @property
    def stop_ref(self) -> Optional[Episode]:
        return self.episode if self.episode.is_stop else None

    @property
    def move_ref(self) -> Optional[Episode]:
        return None if self.episode.is_stop else self.episode


@dataclass(frozen=True)
class SemanticTrajectory:
    traj_id: str
    object_id: str
    segments: tuple[SemanticSegment, ...]
    orphan_posts: int = 0
    foreign_posts: int = 0


@dataclass(frozen=True)
class ModeRule:
    """Speed-threshold table for Move segments: first ``speed < bound`` wins."""

    thresholds: tuple[tuple[float, str], ...]
    fallback: str

    def classify(self, speed_mps: float) -> str:
        for bound, mode in self.thresholds:
            if speed_mps < bound:
                return mode
        return self.fallback


DEFAULT_MODE_RULE = ModeRule(((1.8, "Walking"), (8.0, "Biking")), "Driving")


class GoalRules:
    """(object_category, event_item_name) -> goal lookup; '' stands for "none"."""

    def __init__(self, rules: Mapping[tuple[str, str], str] | None = None):
        self._rules = dict(rules or {})

    def __len__(self):
        return len(self._rules)

    def __eq__(self, other):
        return isinstance(other, GoalRules) and self._rules == other._rules

    def lookup(self, object_category: str, event_item_name: str) -> str:
        return self._rules.get((object_category, event_item_name), UNSPECIFIED_GOAL)

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "GoalRules":
        rules = {}
        for n, line in enumerate(lines, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3 or not parts[2]:
                raise ValueError(f"line {n}: expected object_category,event_item_name,goal")
            rules[(parts[0], parts[1])] = parts[2]
        return cls(rules)


def representative_point(traj: RawTrajectory, ep: Episode) -> GeoPoint:
    if ep.centroid is not None:
        return ep.centroid
    return traj.points[(ep.start_index + ep.end_index) // 2].point


def _best_poi(p: GeoPoint, candidates: Iterable[PointOfInterest]) -> Optional[PointOfInterest]:
    hits = [poi for poi in candidates
            if poi.footprint.bbox.contains(p) and point_in_polygon(p, poi.footprint)]
    if not hits:
        return None
    return min(hits, key=lambda poi: (poi.area, poi.poi_id))


def poi_at(p: GeoPoint, catalog: Sequence[PointOfInterest]) -> Optional[PointOfInterest]:
    return _best_poi(p, catalog)


def match_poi(ep: Episode, catalog: Sequence[PointOfInterest],
              traj: RawTrajectory | None = None) -> Optional[str]:
    """poi_id of the most specific footprint holding the episode's representative point.

    Move episodes need ``traj`` to locate their middle point.
    """
    if ep.is_stop:
        p = ep.centroid
        eligible = [poi for poi in catalog if poi.allows_stop]
    else:
        if traj is None:
            raise ValueError("match_poi needs the trajectory for Move episodes")
        p = representative_point(traj, ep)
        eligible = [poi for poi in catalog if poi.allows_move]
    best = _best_poi(p, eligible)
    return best.poi_id if best else None


def match_events(ep: Episode, catalog: Sequence[EventOfInterest],
                 traj: RawTrajectory | None = None) -> list[str]:
    if ep.is_stop:
        p = ep.centroid
    elif traj is None:
        raise ValueError("match_events needs the trajectory for Move episodes")
    else:
        p = representative_point(traj, ep)
    hits = [ev.event_id for ev in catalog
            if ev.t_start <= ep.t_end and ep.t_begin <= ev.t_end
            and point_in_polygon(p, ev.footprint)]
    return sorted(hits)


def build_semantic_trajectory(
    traj: RawTrajectory,
    pois: Sequence[PointOfInterest] = (),
    events: Sequence[EventOfInterest] = (),
    params: SegmentationParams | None = None,
    goal_rules: GoalRules | None = None,
    mode_rule: ModeRule = DEFAULT_MODE_RULE,
) -> SemanticTrajectory:
    goal_rules = goal_rules or GoalRules()
    poi_by_id = {p.poi_id: p for p in pois}
    event_by_id = {e.event_id: e for e in events}

    segments = []
    for k, ep in enumerate(segment_episodes(traj, params)):
        stats = episode_stats(traj, ep)
        poi_id = match_poi(ep, pois, traj)
        event_ids = tuple(match_events(ep, events, traj))
        poi = poi_by_id.get(poi_id)
        event = event_by_id[event_ids[0]] if event_ids else None
        goal = goal_rules.lookup(poi.object_category if poi else "",
                                 event.event_item_name if event else "")
        annotation = SemanticAnnotation(
            geo_object_property=poi.semantic_purpose if poi else "",
            trajectory_goal=goal,
            event_ref=event.event_id if event else None,
        )
        first, last = traj.points[ep.start_index], traj.points[ep.end_index]
        begin_poi, end_poi = poi_at(first.point, pois), poi_at(last.point, pois)
        segments.append(SemanticSegment(
            ordinal=k,
            begin=SegmentEnd(first, begin_poi.poi_id if begin_poi else None),
            end=SegmentEnd(last, end_poi.poi_id if end_poi else None),
            episode=ep,
            annotation=annotation,
            transport_mode=NO_MODE if ep.is_stop else mode_rule.classify(stats.avg_speed_mps),
            goal=goal,
            stats=stats,
            poi_id=poi_id,
            event_ids=event_ids,
        ))
    return SemanticTrajectory(traj.traj_id, traj.object_id, tuple(segments))


def attach_social_posts(st: SemanticTrajectory, posts: Sequence[SocialPost]) -> SemanticTrajectory:
    """Attach each of the object's posts to the segment whose time span holds it.

    A post on a shared boundary instant goes to the earlier segment. Posts of
    other objects are counted in ``foreign_posts``; posts outside every
    segment in ``orphan_posts``.
    """
    buckets: list[list[SocialPost]] = [[] for _ in st.segments]
    orphans = foreign = 0
    for post in sorted(posts, key=lambda p: (p.t, p.post_id)):
        if post.object_id != st.object_id:
            foreign += 1
            continue
        for k, seg in enumerate(st.segments):
            if seg.begin.point.t <= post.t <= seg.end.point.t:
                buckets[k].append(post)
                break
        else:
            orphans += 1
    segments = tuple(replace(seg, posts=seg.posts + tuple(b))
                     for seg, b in zip(st.segments, buckets))
    return replace(st, segments=segments,
                   orphan_posts=st.orphan_posts + orphans,
                   foreign_posts=st.foreign_posts + foreign)
