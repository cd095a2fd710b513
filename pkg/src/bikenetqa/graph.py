"""Undirected spatial multigraph built from classified edges.

Nodes are created only at polyline endpoints. Endpoints closer than the snap
tolerance collapse into one node; interior crossings are deliberately left
un-noded so that topology defects stay visible to the detectors.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Point

from .geometry import Coord, Polyline, as_polyline, polyline_length, reverse
from .ingest import EdgeRecord

DEFAULT_SNAP_TOLERANCE = 0.001
DEFAULT_BREAKING_ATTRIBUTES = ("protection", "bidirectional", "mapping_method")


def infrastructure_multiplier(bidirectional: bool, mapping_method: str, both_sides: bool) -> int:
    """2 when the feature stands for cycling space in both directions or on
    both sides of the road, otherwise 1. The two causes do not stack."""
    if bidirectional or (mapping_method == "centerline" and both_sides):
        return 2
    return 1


@dataclass(frozen=True)
class Node:
    node_id: int
    position: Coord
    degree: int = 0


@dataclass(frozen=True)
class EdgePart:
    """One original feature inside a (possibly merged) graph edge."""

    source_id: str
    geometry: Polyline
    tags: Mapping[str, str]
    grade_separated: bool


@dataclass(frozen=True)
class GraphEdge:
    edge_id: int
    u: int
    v: int
    key: int
    geometry: Polyline
    protection: str
    bidirectional: bool
    mapping_method: str
    multiplier: int
    parts: tuple[EdgePart, ...]
    geometric_length: float
    infrastructure_length: float

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.u, self.v)

    @property
    def grade_separated(self) -> bool:
        return any(p.grade_separated for p in self.parts)

    @property
    def tags(self) -> tuple[Mapping[str, str], ...]:
        return tuple(p.tags for p in self.parts)

    @property
    def source_ids(self) -> tuple[str, ...]:
        return tuple(p.source_id for p in self.parts)

    @cached_property
    def line(self) -> LineString:
        return LineString(self.geometry)

    def other(self, node: int) -> int:
        return self.v if node == self.u else self.u


def infrastructure_length(edge: GraphEdge | EdgeRecord) -> float:
    """Geometric length scaled by the mapping multiplier (1 or 2)."""
    if isinstance(edge, GraphEdge):
        return edge.geometric_length * edge.multiplier
    m = infrastructure_multiplier(edge.bidirectional, edge.mapping_method, edge.both_sides)
    return polyline_length(edge.geometry) * m


class NetworkGraph:
    """Immutable after construction; analyses only read from it."""

    def __init__(self, nodes: Mapping[int, Node], edges: Mapping[int, GraphEdge],
                 simplified: bool = False, tagged: bool = True) -> None:
        self.nodes: dict[int, Node] = dict(sorted(nodes.items()))
        self.edges: dict[int, GraphEdge] = dict(sorted(edges.items()))
        self.simplified = simplified
        self.tagged = tagged
        incident: dict[int, list[int]] = defaultdict(list)
        for e in self.edges.values():
            incident[e.u].append(e.edge_id)
            incident[e.v].append(e.edge_id)
        self.incident: dict[int, tuple[int, ...]] = {n: tuple(incident.get(n, ())) for n in self.nodes}

    def degree(self, node_id: int) -> int:
        return len(self.incident[node_id])

    def neighbors(self, node_id: int) -> set[int]:
        return {self.edges[e].other(node_id) for e in self.incident[node_id]}

    @cached_property
    def edge_ids(self) -> np.ndarray:
        return np.fromiter(self.edges.keys(), dtype=np.int64, count=len(self.edges))

    @cached_property
    def edge_tree(self) -> shapely.STRtree:
        """R-tree over edge geometries; query results index into ``edge_ids``."""
        return shapely.STRtree([e.line for e in self.edges.values()])

    @cached_property
    def node_tree(self) -> shapely.STRtree:
        return shapely.STRtree([Point(n.position) for n in self.nodes.values()])

    @property
    def total_geometric_length(self) -> float:
        return float(sum(e.geometric_length for e in self.edges.values()))

    @property
    def total_infrastructure_length(self) -> float:
        return float(sum(e.infrastructure_length for e in self.edges.values()))

    def edge_records(self) -> list[EdgeRecord]:
        """Flatten back to records (merged edges become one record)."""
        out = []
        for e in self.edges.values():
            tags = dict(e.parts[0].tags) if len(e.parts) == 1 else {}
            out.append(EdgeRecord(e.edge_id, "+".join(e.source_ids), e.geometry, e.protection,
                                  e.bidirectional, e.mapping_method, e.grade_separated,
                                  e.multiplier == 2 and not e.bidirectional, tags))
        return out


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the lower index as root so cluster order is stable
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _assign_keys(raw: list[tuple[int, int, int]]) -> dict[int, int]:
    counts: Counter = Counter()
    keys = {}
    for eid, u, v in sorted(raw):
        pair = (min(u, v), max(u, v))
        keys[eid] = counts[pair]
        counts[pair] += 1
    return keys


def _make_nodes(positions: Mapping[int, Coord], edges: Iterable[GraphEdge]) -> dict[int, Node]:
    deg: Counter = Counter()
    for e in edges:
        deg[e.u] += 1
        deg[e.v] += 1
    return {n: Node(n, positions[n], deg[n]) for n in positions if deg[n] > 0}


def build_graph(edges: Sequence[EdgeRecord], snap_tolerance: float = DEFAULT_SNAP_TOLERANCE,
                tagged: bool = True) -> NetworkGraph:
    """Build the graph; endpoint clusters (single linkage within
    ``snap_tolerance``) become nodes placed at the cluster mean."""
    if snap_tolerance <= 0:
        raise ValueError("snap_tolerance must be positive")
    if not edges:
        return NetworkGraph({}, {}, tagged=tagged)
    ends = np.array([p for e in edges for p in (e.geometry[0], e.geometry[-1])], dtype=float)
    uf = _UnionFind(len(ends))
    tree = shapely.STRtree(shapely.points(ends))
    left, right = tree.query(shapely.points(ends), predicate="dwithin", distance=snap_tolerance)
    for a, b in zip(left.tolist(), right.tolist()):
        if a < b:
            uf.union(a, b)

    roots = [uf.find(i) for i in range(len(ends))]
    node_of_root: dict[int, int] = {}
    members: dict[int, list[int]] = defaultdict(list)
    for i, r in enumerate(roots):
        if r not in node_of_root:
            node_of_root[r] = len(node_of_root)
        members[node_of_root[r]].append(i)
    positions: dict[int, Coord] = {}
    for nid, idx in members.items():
        pts = ends[idx]
        positions[nid] = (float(pts[:, 0].mean()), float(pts[:, 1].mean())) if len(idx) > 1 \
            else (float(pts[0, 0]), float(pts[0, 1]))

    pending = []
    for i, rec in enumerate(edges):
        u, v = node_of_root[roots[2 * i]], node_of_root[roots[2 * i + 1]]
        coords = as_polyline((positions[u], *rec.geometry[1:-1], positions[v]))
        length = polyline_length(coords)
        if len(coords) < 2 or length == 0.0:
            continue
        pending.append((rec, u, v, coords, length))

    keys = _assign_keys([(rec.edge_id, u, v) for rec, u, v, _, _ in pending])
    graph_edges = {}
    for rec, u, v, coords, length in pending:
        m = infrastructure_multiplier(rec.bidirectional, rec.mapping_method, rec.both_sides)
        part = EdgePart(rec.source_id, coords, dict(rec.tags), rec.grade_separated)
        graph_edges[rec.edge_id] = GraphEdge(
            rec.edge_id, u, v, keys[rec.edge_id], coords, rec.protection, rec.bidirectional,
            rec.mapping_method, m, (part,), length, length * m)
    return NetworkGraph(_make_nodes(positions, graph_edges.values()), graph_edges, tagged=tagged)


def _breaking_key(edge: GraphEdge, attributes: Sequence[str]) -> tuple:
    # the multiplier always breaks chains so merged edges keep an exact 1x/2x ratio
    return tuple(getattr(edge, a) for a in attributes) + (edge.multiplier,)


def interstitial_nodes(graph: NetworkGraph,
                       breaking_attributes: Sequence[str] = DEFAULT_BREAKING_ATTRIBUTES) -> set[int]:
    """Degree-2 nodes joining two distinct edges with equal breaking attributes."""
    out = set()
    for n, inc in graph.incident.items():
        if len(inc) == 2 and inc[0] != inc[1]:
            a, b = graph.edges[inc[0]], graph.edges[inc[1]]
            if _breaking_key(a, breaking_attributes) == _breaking_key(b, breaking_attributes):
                out.add(n)
    return out


def _oriented(edge: GraphEdge, start: int) -> tuple[Polyline, tuple[EdgePart, ...]]:
    if edge.u == start:
        return edge.geometry, edge.parts
    parts = tuple(EdgePart(p.source_id, reverse(p.geometry), p.tags, p.grade_separated)
                  for p in reversed(edge.parts))
    return reverse(edge.geometry), parts


def simplify(graph: NetworkGraph,
             breaking_attributes: Sequence[str] = DEFAULT_BREAKING_ATTRIBUTES) -> NetworkGraph:
    """Merge maximal chains through interstitial nodes into single edges.

    Nodes survive at intersections, dead ends and wherever a breaking
    attribute (or the infrastructure multiplier) changes. An isolated ring of
    interstitial nodes becomes one self-loop anchored at its lowest node id.
    """
    if graph.simplified:
        raise ValueError("graph is already simplified")
    inter = interstitial_nodes(graph, breaking_attributes)
    consumed: set[int] = set()
    chains: list[tuple[int, list[int], int]] = []

    def walk(start: int, first_edge: int) -> tuple[list[int], int]:
        path = [first_edge]
        consumed.add(first_edge)
        node = graph.edges[first_edge].other(start)
        prev = first_edge
        while node in inter and node != start:
            nxt = next(e for e in graph.incident[node] if e != prev)
            path.append(nxt)
            consumed.add(nxt)
            node = graph.edges[nxt].other(node)
            prev = nxt
        return path, node

    for n in graph.nodes:
        if n in inter:
            continue
        for eid in graph.incident[n]:
            if eid not in consumed:
                path, end = walk(n, eid)
                chains.append((n, path, end))

    for eid in graph.edges:
        if eid in consumed:
            continue
        # pure ring of interstitial nodes
        ring_nodes = []
        node, prev = graph.edges[eid].u, None
        while True:
            ring_nodes.append(node)
            prev = next(e for e in graph.incident[node] if e != prev) if prev is not None else eid
            node = graph.edges[prev].other(node)
            if node == ring_nodes[0]:
                break
        start = min(ring_nodes)
        path, end = walk(start, min(graph.incident[start]))
        chains.append((start, path, end))

    positions = {n: node.position for n, node in graph.nodes.items()}
    raw_edges = []
    for start, path, end in chains:
        coords: list[Coord] = []
        parts: list[EdgePart] = []
        node = start
        for eid in path:
            e = graph.edges[eid]
            geom, eparts = _oriented(e, node)
            coords.extend(geom if not coords else geom[1:])
            parts.extend(eparts)
            node = e.other(node)
        first = graph.edges[path[0]]
        raw_edges.append((start, end, tuple(coords), first, tuple(parts),
                          sum(graph.edges[i].geometric_length for i in path),
                          sum(graph.edges[i].infrastructure_length for i in path)))

    keys = _assign_keys([(i, r[0], r[1]) for i, r in enumerate(raw_edges)])
    new_edges = {}
    for i, (u, v, coords, first, parts, glen, ilen) in enumerate(raw_edges):
        new_edges[i] = GraphEdge(i, u, v, keys[i], coords, first.protection, first.bidirectional,
                                 first.mapping_method, first.multiplier, parts, glen, ilen)
    return NetworkGraph(_make_nodes(positions, new_edges.values()), new_edges,
                        simplified=True, tagged=graph.tagged)


def graph_summary(graph: NetworkGraph) -> dict:
    per_class: dict[str, dict[str, float]] = {}
    for cls in ("protected", "unprotected"):
        members = [e for e in graph.edges.values() if e.protection == cls]
        per_class[cls] = {
            "edge_count": len(members),
            "infrastructure_length_m": float(sum(e.infrastructure_length for e in members)),
        }
    return {
        "node_count": len(graph.nodes),
        "edge_count": len(graph.edges),
        "geometric_length_m": graph.total_geometric_length,
        "infrastructure_length_m": graph.total_infrastructure_length,
        "protection": per_class,
        "dangling_node_count": sum(1 for n in graph.nodes if graph.degree(n) == 1),
    }


def graph_to_geojson(graph: NetworkGraph,
                     edge_extra: Mapping[int, Mapping] | None = None) -> tuple[dict, dict]:
    """Nodes and edges as two FeatureCollections ordered by id."""
    from .serialize import feature, feature_collection, line_geometry, point_geometry

    edge_extra = edge_extra or {}
    nodes = feature_collection(
        feature(point_geometry(n.position), {"node_id": n.node_id, "degree": graph.degree(n.node_id)})
        for n in graph.nodes.values())
    edges = feature_collection(
        feature(line_geometry(e.geometry), {
            "edge_id": e.edge_id,
            "u": e.u,
            "v": e.v,
            "key": e.key,
            "protection": e.protection,
            "bidirectional": e.bidirectional,
            "mapping_method": e.mapping_method,
            "grade_separated": e.grade_separated,
            "multiplier": e.multiplier,
            "geometric_length_m": e.geometric_length,
            "infrastructure_length_m": e.infrastructure_length,
            "source_ids": ";".join(e.source_ids),
            **edge_extra.get(e.edge_id, {}),
        })
        for e in graph.edges.values())
    return nodes, edges
