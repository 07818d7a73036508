"""Road segments, point-to-polyline distance and nearest-segment conflation.

Distances use a local equirectangular projection centred on the query point.
Within that projection every segment edge is a straight line and every
lat/lon bounding box is an axis-aligned rectangle, so box distances are exact
lower bounds for the best-first R-tree search.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from nearcrash.events import NearCrashEvent
from nearcrash.model import ValidationError

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180

UNKNOWN = "unknown"

# HPMS F_SYSTEM codes
F_SYSTEM_CODES = {
    1: "interstate",
    2: "principal arterial",  # other freeways and expressways
    3: "principal arterial",
    4: "minor arterial",
    5: "major collector",
    6: "minor collector",
    7: "local",
}
# HPMS ACCESS_CONTROL codes: 1 full, 2 partial, 3 none
ACCESS_CODES = {1: "yes", 2: "yes", 3: "no"}
# HPMS MEDIAN_TYPE codes
MEDIAN_CODES = {
    1: "none",
    2: "unprotected",
    3: "curbed",
    4: "barrier",
    5: "barrier",
    6: "barrier",
    7: "barrier",
}
_MEDIAN_LABELS = {"none", "unprotected", "curbed", "barrier"}
_ACCESS_LABELS = {"yes": "yes", "no": "no", "full": "yes", "partial": "yes", "none": "no"}

NUMERIC_ATTRIBUTES = ("shoulder_width", "lane_width", "median_width", "speed_limit", "aadt")


class GeometryError(ValueError):
    """A feature's geometry cannot be used as a road segment."""


@dataclass(frozen=True)
class RoadSegment:
    """A road polyline with HPMS-style attributes.

    Numeric attributes are ``None`` when missing; categorical ones are the
    string ``"unknown"``.
    """

    segment_id: str
    polyline: tuple[tuple[float, float], ...]  # (lat, lon) vertices
    f_system: str = UNKNOWN
    access_con: str = UNKNOWN
    shoulder_width: float | None = None
    lane_width: float | None = None
    median_type: str = UNKNOWN
    median_width: float | None = None
    speed_limit: float | None = None
    aadt: float | None = None

    def __post_init__(self) -> None:
        cleaned: list[tuple[float, float]] = []
        for lat, lon in self.polyline:
            lat, lon = float(lat), float(lon)
            if not (math.isfinite(lat) and math.isfinite(lon)):
                raise GeometryError(f"segment {self.segment_id}: non-finite vertex")
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise GeometryError(f"segment {self.segment_id}: vertex ({lat}, {lon}) out of range")
            if not cleaned or cleaned[-1] != (lat, lon):
                cleaned.append((lat, lon))
        if len(cleaned) < 2:
            raise GeometryError(f"segment {self.segment_id}: fewer than 2 distinct vertices")
        object.__setattr__(self, "polyline", tuple(cleaned))
        for name in NUMERIC_ATTRIBUTES:
            v = getattr(self, name)
            if v is not None and (not math.isfinite(v) or v < 0):
                raise ValidationError(f"segment {self.segment_id}: {name}={v} must be >= 0")
        if self.speed_limit is not None and self.speed_limit <= 0:
            raise ValidationError(f"segment {self.segment_id}: speed_limit must be > 0")

    @property
    def envelope(self) -> tuple[float, float, float, float]:
        lats = [p[0] for p in self.polyline]
        lons = [p[1] for p in self.polyline]
        return min(lats), min(lons), max(lats), max(lons)

    def attributes(self) -> dict[str, Any]:
        return {
            "f_system": self.f_system,
            "access_con": self.access_con,
            "shoulder_width": self.shoulder_width,
            "lane_width": self.lane_width,
            "median_type": self.median_type,
            "median_width": self.median_width,
            "speed_limit": self.speed_limit,
            "aadt": self.aadt,
        }


def segment_sort_key(segment_id: str) -> tuple[int, int | str]:
    """Numeric ids compare as numbers and sort before non-numeric ones."""
    s = str(segment_id)
    try:
        return (0, int(s))
    except ValueError:
        return (1, s)


@dataclass(frozen=True)
class ConflatedEvent:
    event: NearCrashEvent
    segment: RoadSegment
    distance_m: float


# ---------------------------------------------------------------------------
# loading


def _num(v: Any) -> float | None:
    if v is None or (isinstance(v, str) and not v.strip()):
        return None
    x = float(v)
    return x if math.isfinite(x) else None


def _coded(v: Any, codes: Mapping[int, str], labels: Mapping[str, str] | set[str]) -> str:
    if v is None or (isinstance(v, str) and not v.strip()):
        return UNKNOWN
    if isinstance(v, str):
        s = v.strip().lower()
        if s == UNKNOWN:
            return UNKNOWN
        if s in labels:
            return labels[s] if isinstance(labels, Mapping) else s
        try:
            v = float(s)
        except ValueError:
            raise ValidationError(f"unrecognised level {v!r}") from None
    code = int(v)
    if code not in codes:
        raise ValidationError(f"unrecognised code {v!r}")
    return codes[code]


def _f_system(v: Any) -> str:
    labels = {s: s for s in F_SYSTEM_CODES.values()}
    return _coded(v, F_SYSTEM_CODES, labels)


def _segment_from_feature(feature: Mapping[str, Any], fallback_id: str) -> RoadSegment:
    props = {str(k).lower(): v for k, v in (feature.get("properties") or {}).items()}
    geom = feature.get("geometry") or {}
    if geom.get("type") != "LineString":
        raise GeometryError(f"feature {fallback_id}: geometry type {geom.get('type')!r} is not LineString")
    coords = geom.get("coordinates") or []
    seg_id = props.get("segment_id", feature.get("id", fallback_id))
    try:
        polyline = tuple((float(c[1]), float(c[0])) for c in coords)
    except (TypeError, ValueError, IndexError) as exc:
        raise GeometryError(f"feature {seg_id}: bad coordinates") from exc
    return RoadSegment(
        segment_id=str(seg_id),
        polyline=polyline,
        f_system=_f_system(props.get("f_system")),
        access_con=_coded(props.get("access_con"), ACCESS_CODES, _ACCESS_LABELS),
        shoulder_width=_num(props.get("shoulder_width")),
        lane_width=_num(props.get("lane_width")),
        median_type=_coded(props.get("median_type"), MEDIAN_CODES, _MEDIAN_LABELS),
        median_width=_num(props.get("median_width")),
        speed_limit=_num(props.get("speed_limit")),
        aadt=_num(props.get("aadt")),
    )


@dataclass
class SegmentLoad:
    segments: list[RoadSegment]
    skipped: int = 0
    errors: list[str] = field(default_factory=list)


def load_segments(source: str | Path) -> SegmentLoad:
    """Load a GeoJSON FeatureCollection of LineString road segments.

    Coordinates are ``[lon, lat]`` as GeoJSON requires. Properties use the
    HPMS names (``f_system``, ``access_con``, ``shoulder_width``,
    ``lane_width``, ``median_type``, ``median_width``, ``speed_limit``,
    ``aadt``) with either HPMS codes or level labels. Features with unusable
    geometry are skipped and counted.
    """
    with open(source) as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise ValidationError(f"{source}: expected a FeatureCollection")
    out = SegmentLoad([])
    seen: set[str] = set()
    for k, feat in enumerate(doc.get("features", []), 1):
        try:
            seg = _segment_from_feature(feat, str(k))
        except GeometryError as exc:
            out.skipped += 1
            out.errors.append(str(exc))
            continue
        if seg.segment_id in seen:
            raise ValidationError(f"{source}: duplicate segment_id {seg.segment_id}")
        seen.add(seg.segment_id)
        out.segments.append(seg)
    if out.skipped:
        log.warning("%s: skipped %d features with invalid geometry", source, out.skipped)
    return out


def load_exclusions(path: str | Path | None) -> frozenset[str]:
    """Read segment ids to leave out of the join, one per line; ``#`` comments."""
    if path is None:
        return frozenset()
    ids = set()
    with open(path) as fh:
        for line in fh:
            s = line.split("#", 1)[0].strip()
            if s:
                ids.add(s)
    return frozenset(ids)


def segment_to_feature(seg: RoadSegment) -> dict[str, Any]:
    return {
        "type": "Feature",
        "properties": {"segment_id": seg.segment_id, **seg.attributes()},
        "geometry": {
            "type": "LineString",
            "coordinates": [[lon, lat] for lat, lon in seg.polyline],
        },
    }


# ---------------------------------------------------------------------------
# distance


def _project(lat0: float, lon0: float, coslat: float, lat: float, lon: float) -> tuple[float, float]:
    return (lon - lon0) * coslat * _M_PER_DEG, (lat - lat0) * _M_PER_DEG


def _edge_distance(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> float:
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    if den == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / den
    t = 0.0 if t < 0.0 else 1.0 if t > 1.0 else t
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def point_segment_distance(p: tuple[float, float], polyline: Sequence[tuple[float, float]] | RoadSegment) -> float:
    """Metres from ``p = (lat, lon)`` to the nearest point of a polyline."""
    if isinstance(polyline, RoadSegment):
        polyline = polyline.polyline
    lat0, lon0 = p
    coslat = math.cos(math.radians(lat0))
    pts = [_project(lat0, lon0, coslat, lat, lon) for lat, lon in polyline]
    if len(pts) == 1:
        return math.hypot(*pts[0])
    return min(
        _edge_distance(0.0, 0.0, ax, ay, bx, by)
        for (ax, ay), (bx, by) in zip(pts, pts[1:])
    )


def _box_distance(lat0: float, lon0: float, coslat: float, box: Sequence[float]) -> float:
    min_lat, min_lon, max_lat, max_lon = box
    dlat = min_lat - lat0 if lat0 < min_lat else lat0 - max_lat if lat0 > max_lat else 0.0
    dlon = min_lon - lon0 if lon0 < min_lon else lon0 - max_lon if lon0 > max_lon else 0.0
    return math.hypot(dlon * coslat * _M_PER_DEG, dlat * _M_PER_DEG)


# ---------------------------------------------------------------------------
# index


@dataclass(frozen=True)
class _Node:
    box: tuple[float, float, float, float]
    children: tuple["_Node", ...] = ()
    entries: tuple[int, ...] = ()  # segment positions, leaves only


def _union(boxes: np.ndarray) -> tuple[float, float, float, float]:
    return (
        float(boxes[:, 0].min()),
        float(boxes[:, 1].min()),
        float(boxes[:, 2].max()),
        float(boxes[:, 3].max()),
    )


def _str_pack(boxes: np.ndarray, ids: np.ndarray, capacity: int) -> list[np.ndarray]:
    """Sort-Tile-Recursive grouping of box positions into runs of ``capacity``."""
    n = len(ids)
    if n <= capacity:
        return [ids]
    n_groups = math.ceil(n / capacity)
    n_slices = math.ceil(math.sqrt(n_groups))
    cx = (boxes[ids, 1] + boxes[ids, 3]) / 2
    cy = (boxes[ids, 0] + boxes[ids, 2]) / 2
    # lexsort keys keep the packing independent of input order
    order = ids[np.lexsort((ids, cy, cx))]
    per_slice = n_slices * capacity
    groups = []
    for s in range(0, n, per_slice):
        sl = order[s : s + per_slice]
        sy = (boxes[sl, 0] + boxes[sl, 2]) / 2
        sx = (boxes[sl, 1] + boxes[sl, 3]) / 2
        sl = sl[np.lexsort((sl, sx, sy))]
        groups.extend(sl[i : i + capacity] for i in range(0, len(sl), capacity))
    return groups


class SegmentIndex:
    """Immutable STR-packed R-tree over segment envelopes.

    Segments are stored in ``segment_id`` order, so the tree and every query
    result are independent of the order segments were supplied in.
    """

    def __init__(self, segments: Iterable[RoadSegment], node_capacity: int = 10):
        segs = sorted(segments, key=lambda s: segment_sort_key(s.segment_id))
        if not segs:
            raise ValidationError("cannot index an empty segment set")
        if node_capacity < 2:
            raise ValidationError("node_capacity must be at least 2")
        self.segments: tuple[RoadSegment, ...] = tuple(segs)
        self._rank = {s.segment_id: k for k, s in enumerate(segs)}
        boxes = np.array([s.envelope for s in segs], dtype=float)
        level = [
            _Node(_union(boxes[g]), entries=tuple(int(i) for i in g))
            for g in _str_pack(boxes, np.arange(len(segs)), node_capacity)
        ]
        while len(level) > 1:
            nb = np.array([n.box for n in level], dtype=float)
            level = [
                _Node(_union(nb[g]), children=tuple(level[int(i)] for i in g))
                for g in _str_pack(nb, np.arange(len(level)), node_capacity)
            ]
        self._root = level[0]

    def __len__(self) -> int:
        return len(self.segments)

    def nearest(
        self, p: tuple[float, float], excluded: Iterable[str] = ()
    ) -> tuple[RoadSegment, float]:
        """Closest non-excluded segment to ``p``; exact ties go to the lowest id."""
        excluded = frozenset(excluded)
        lat0, lon0 = p
        coslat = math.cos(math.radians(lat0))
        best: tuple[float, int] | None = None
        counter = 0
        heap: list[tuple[float, int, int, Any]] = [(0.0, 0, counter, self._root)]
        while heap:
            bound, kind, _, obj = heapq.heappop(heap)
            if best is not None and bound > best[0]:
                break
            if kind == 1:
                cand = (bound, obj)
                if best is None or cand < best:
                    best = cand
                continue
            node: _Node = obj
            for child in node.children:
                counter += 1
                heapq.heappush(heap, (_box_distance(lat0, lon0, coslat, child.box), 0, counter, child))
            for pos in node.entries:
                seg = self.segments[pos]
                if seg.segment_id in excluded:
                    continue
                d = point_segment_distance(p, seg.polyline)
                counter += 1
                heapq.heappush(heap, (d, 1, counter, pos))
        if best is None:
            raise LookupError("no segment available: all segments are excluded")
        return self.segments[best[1]], best[0]


def build_index(segments: Iterable[RoadSegment], node_capacity: int = 10) -> SegmentIndex:
    return SegmentIndex(segments, node_capacity)


def nearest_segment(
    index: SegmentIndex, p: tuple[float, float], excluded: Iterable[str] = ()
) -> tuple[RoadSegment, float]:
    return index.nearest(p, excluded)


def nearest_segment_scan(
    segments: Iterable[RoadSegment], p: tuple[float, float], excluded: Iterable[str] = ()
) -> tuple[RoadSegment, float]:
    """Exhaustive reference for :func:`nearest_segment`."""
    excluded = frozenset(excluded)
    best = None
    for seg in segments:
        if seg.segment_id in excluded:
            continue
        key = (point_segment_distance(p, seg.polyline), segment_sort_key(seg.segment_id))
        if best is None or key < best[0]:
            best = (key, seg)
    if best is None:
        raise LookupError("no segment available: all segments are excluded")
    return best[1], best[0][0]


@dataclass
class ConflationResult:
    events: list[ConflatedEvent]
    rejected: int = 0
    rejected_events: list[NearCrashEvent] = field(default_factory=list)


DEFAULT_MAX_DISTANCE_M = 100.0


def conflate(
    events: Iterable[NearCrashEvent],
    index: SegmentIndex,
    excluded: Iterable[str] = (),
    max_distance_m: float | None = DEFAULT_MAX_DISTANCE_M,
) -> ConflationResult:
    """Attach each event to its nearest segment, rejecting those too far away."""
    excluded = frozenset(excluded)
    out = ConflationResult([])
    for ev in sorted(events, key=lambda e: (e.device, e.trip, e.event_time)):
        seg, d = index.nearest(ev.location, excluded)
        if max_distance_m is not None and d > max_distance_m:
            out.rejected += 1
            out.rejected_events.append(ev)
            continue
        out.events.append(ConflatedEvent(ev, seg, d))
    return out
