"""Segment-based feature matching between two networks.

Edges are cut into pieces of uniform length. For each source piece, target
pieces within the search buffer are candidates; among those meeting both the
Hausdorff and the angle threshold the best one wins (smallest Hausdorff
distance, then smallest angle, then lowest target id). Target pieces may be
matched by several source pieces.
"""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString

from .geometry import Polyline, chord_angle, densify, point_to_segments, polyline_length, split_at_distances
from .graph import NetworkGraph

DEFAULT_SEGMENT_LENGTH = 10.0
DEFAULT_BUFFER_DISTANCE = 15.0
DEFAULT_HAUSDORFF_THRESHOLD = 12.0
DEFAULT_ANGLE_THRESHOLD = 30.0
DEFAULT_MIN_FRACTION = 0.5
DEFAULT_COMPARED_ATTRIBUTES = ("protection", "bidirectional")
DENSIFY_SPACING = 1.0


@dataclass(frozen=True)
class MatchParams:
    segment_length: float = DEFAULT_SEGMENT_LENGTH
    buffer_distance: float = DEFAULT_BUFFER_DISTANCE
    hausdorff_threshold: float = DEFAULT_HAUSDORFF_THRESHOLD
    angle_threshold: float = DEFAULT_ANGLE_THRESHOLD
    min_fraction: float = DEFAULT_MIN_FRACTION
    compared_attributes: tuple[str, ...] = DEFAULT_COMPARED_ATTRIBUTES

    def __post_init__(self) -> None:
        for name in ("segment_length", "buffer_distance", "hausdorff_threshold", "angle_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.min_fraction <= 1:
            raise ValueError("min_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class Segment:
    segment_id: int
    edge_id: int
    part_index: int
    geometry: Polyline
    length: float
    attributes: Mapping[str, object]


@dataclass(frozen=True)
class SegmentMatch:
    source_id: int
    target_id: int | None
    hausdorff: float | None = None
    angle: float | None = None

    @property
    def matched(self) -> bool:
        return self.target_id is not None


@dataclass(frozen=True)
class EdgeMatchSummary:
    edge_id: int
    matched_fraction: float
    status: str  # "matched" | "unmatched"
    attribute_agreement: Mapping[str, str]  # "agree" | "disagree" | "unknown"
    total_length: float
    matched_length: float


def segmentize(graph: NetworkGraph, segment_length: float = DEFAULT_SEGMENT_LENGTH) -> list[Segment]:
    """Cut every edge into ``segment_length`` pieces; the last piece of an edge
    holds the remainder."""
    if not segment_length > 0:
        raise ValueError("segment_length must be positive")
    out: list[Segment] = []
    for e in graph.edges.values():
        total = polyline_length(e.geometry)
        n = max(1, math.ceil(total / segment_length - 1e-9))
        pieces = split_at_distances(e.geometry, [k * segment_length for k in range(1, n)])
        attrs = {"protection": e.protection, "bidirectional": e.bidirectional,
                 "mapping_method": e.mapping_method}
        for k, piece in enumerate(pieces):
            out.append(Segment(len(out), e.edge_id, k, piece, polyline_length(piece), attrs))
    return out


def _directed(points: np.ndarray, coords: np.ndarray) -> float:
    return float(point_to_segments(points, coords[:-1], coords[1:]).min(axis=1).max())


def _same_curve(a: np.ndarray, b: np.ndarray) -> bool:
    # sampled points are not exactly on their own line, so identity is tested directly
    return a.shape == b.shape and (np.array_equal(a, b) or np.array_equal(a, b[::-1]))


def undirected_hausdorff(a: Sequence, b: Sequence, spacing: float = DENSIFY_SPACING) -> float:
    """Symmetric Hausdorff distance with each side densified to ``spacing``.

    Points sampled on one polyline are measured against the other polyline
    exactly, so the result never exceeds the true distance and undershoots it
    by less than ``spacing / 2``.
    """
    ca, cb = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if _same_curve(ca, cb):
        return 0.0
    return max(_directed(densify(ca, spacing), cb), _directed(densify(cb, spacing), ca))


def segment_angle(a: Sequence, b: Sequence) -> float:
    """Acute angle in degrees between the end-to-end chords; direction-insensitive."""
    return chord_angle(a, b)


class _Prepared:
    """Per-segment arrays reused across many Hausdorff evaluations."""

    __slots__ = ("coords", "dense")

    def __init__(self, seg: Segment, spacing: float) -> None:
        self.coords = np.asarray(seg.geometry, dtype=float)
        self.dense = densify(self.coords, spacing)


def _best_for(src: Segment, psrc: _Prepared, cands: Iterable[int], targets: Sequence[Segment],
              prepared: Sequence[_Prepared], params: MatchParams) -> SegmentMatch:
    kept: list[tuple[int, float]] = []
    for t in cands:
        try:
            angle = chord_angle(src.geometry, targets[t].geometry)
        except ValueError:
            continue  # closed piece without a usable direction
        if angle <= params.angle_threshold:
            kept.append((t, angle))
    if not kept:
        return SegmentMatch(src.segment_id, None)
    # all candidates in one go: segments and dense points are stacked and
    # reduced per candidate, which is the same arithmetic as one call each
    tc = [prepared[t].coords for t, _ in kept]
    td = [prepared[t].dense for t, _ in kept]
    seg_off = np.cumsum([0] + [len(c) - 1 for c in tc[:-1]])
    pt_off = np.cumsum([0] + [len(d) for d in td[:-1]])
    starts = np.concatenate([c[:-1] for c in tc])
    ends = np.concatenate([c[1:] for c in tc])
    forward = np.minimum.reduceat(point_to_segments(psrc.dense, starts, ends), seg_off, axis=1).max(axis=0)
    back = point_to_segments(np.concatenate(td), psrc.coords[:-1], psrc.coords[1:]).min(axis=1)
    backward = np.maximum.reduceat(back, pt_off)
    best: tuple[float, float, int] | None = None
    for k, (t, angle) in enumerate(kept):
        h = 0.0 if _same_curve(psrc.coords, tc[k]) else float(max(forward[k], backward[k]))
        if h > params.hausdorff_threshold:
            continue
        cand = (h, angle, targets[t].segment_id)
        if best is None or cand < best:
            best = cand
    if best is None:
        return SegmentMatch(src.segment_id, None)
    return SegmentMatch(src.segment_id, best[2], best[0], best[1])


def match_segments(source: Sequence[Segment], target: Sequence[Segment],
                   params: MatchParams = MatchParams(), jobs: int = 1,
                   spacing: float = DENSIFY_SPACING) -> list[SegmentMatch]:
    """Best target piece for every source piece, ordered by source segment id."""
    if not source:
        return []
    if not target:
        return [SegmentMatch(s.segment_id, None) for s in source]
    tree = shapely.STRtree([LineString(t.geometry) for t in target])
    src_lines = [LineString(s.geometry) for s in source]
    left, right = tree.query(src_lines, predicate="dwithin", distance=params.buffer_distance)
    cands: dict[int, list[int]] = defaultdict(list)
    for i, j in zip(left.tolist(), right.tolist()):
        cands[i].append(j)
    prepared = [_Prepared(t, spacing) for t in target]

    def run(chunk: range) -> list[SegmentMatch]:
        return [_best_for(source[i], _Prepared(source[i], spacing), cands.get(i, ()), target,
                          prepared, params) for i in chunk]

    jobs = max(1, jobs)
    size = math.ceil(len(source) / jobs)
    chunks = [range(k, min(k + size, len(source))) for k in range(0, len(source), size)]
    if jobs == 1 or len(chunks) == 1:
        results = [m for c in chunks for m in run(c)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = [m for part in pool.map(run, chunks) for m in part]
    return sorted(results, key=lambda m: m.source_id)


def aggregate_matches(matches: Sequence[SegmentMatch], source: Sequence[Segment],
                      target: Sequence[Segment], graph: NetworkGraph,
                      min_fraction: float = DEFAULT_MIN_FRACTION,
                      compared_attributes: Sequence[str] = DEFAULT_COMPARED_ATTRIBUTES
                      ) -> list[EdgeMatchSummary]:
    """Roll segment matches up to edges.

    ``matched_fraction`` is length weighted. For each compared attribute the
    counterpart value is the length-weighted majority over matched pieces; a
    tie or no matched piece gives ``"unknown"``.
    """
    if not 0 < min_fraction <= 1:
        raise ValueError("min_fraction must lie in (0, 1]")
    by_id = {s.segment_id: s for s in source}
    tgt = {s.segment_id: s for s in target}
    total: dict[int, float] = defaultdict(float)
    matched: dict[int, float] = defaultdict(float)
    votes: dict[int, dict[str, dict[object, float]]] = defaultdict(lambda: defaultdict(dict))
    for s in source:
        total[s.edge_id] += s.length
    for m in matches:
        s = by_id[m.source_id]
        if not m.matched:
            continue
        matched[s.edge_id] += s.length
        counterpart = tgt[m.target_id]
        for attr in compared_attributes:
            row = votes[s.edge_id][attr]
            value = counterpart.attributes.get(attr)
            row[value] = row.get(value, 0.0) + s.length
    out = []
    for e in graph.edges.values():
        t = total.get(e.edge_id, 0.0)
        frac = matched.get(e.edge_id, 0.0) / t if t > 0 else 0.0
        agreement = {}
        for attr in compared_attributes:
            row = votes.get(e.edge_id, {}).get(attr, {})
            if not row:
                agreement[attr] = "unknown"
                continue
            ranked = sorted(row.values(), reverse=True)
            if len(ranked) > 1 and ranked[0] == ranked[1]:
                agreement[attr] = "unknown"
                continue
            majority = max(row, key=row.get)
            agreement[attr] = "agree" if majority == getattr(e, attr) else "disagree"
        out.append(EdgeMatchSummary(e.edge_id, frac, "matched" if frac >= min_fraction else "unmatched",
                                    agreement, t, matched.get(e.edge_id, 0.0)))
    return out


@dataclass(frozen=True)
class UnmatchedReport:
    """Candidate omissions/commissions for human review; no verdict implied."""

    a_unmatched: tuple[int, ...]
    b_unmatched: tuple[int, ...]
    a_nearest_other: Mapping[int, float | None]
    b_nearest_other: Mapping[int, float | None]


def _nearest(ids: Sequence[int], graph: NetworkGraph, other: NetworkGraph) -> dict[int, float | None]:
    if not ids:
        return {}
    if not other.edges:
        return {i: None for i in ids}
    lines = [graph.edges[i].line for i in ids]
    _, dist = other.edge_tree.query_nearest(lines, return_distance=True, all_matches=False)
    return {i: float(d) for i, d in zip(ids, dist.tolist())}


def unmatched_report(a_summaries: Sequence[EdgeMatchSummary], b_summaries: Sequence[EdgeMatchSummary],
                     a_graph: NetworkGraph, b_graph: NetworkGraph) -> UnmatchedReport:
    """Unmatched edges of each data set, with the distance to the nearest
    edge of the other one."""
    a_ids = tuple(s.edge_id for s in a_summaries if s.status == "unmatched")
    b_ids = tuple(s.edge_id for s in b_summaries if s.status == "unmatched")
    return UnmatchedReport(a_ids, b_ids, _nearest(a_ids, a_graph, b_graph),
                           _nearest(b_ids, b_graph, a_graph))
