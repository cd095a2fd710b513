"""Topology diagnostics: dangling nodes, over/undershoots, un-noded crossings,
disconnected components, gaps between components and cell reachability."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Point

from .geometry import Coord, point_polyline_distance
from .graph import NetworkGraph, _UnionFind
from .grid import AnalysisGrid, CellValues, edge_cell_lengths, node_cells

DEFAULT_OVERSHOOT_LENGTH = 3.0
DEFAULT_UNDERSHOOT_DISTANCE = 3.0
DEFAULT_COMPONENT_GAP = 10.0

FLAG_KINDS = ("dangling_node", "overshoot", "undershoot", "missing_intersection_node",
              "component_gap")


@dataclass(frozen=True)
class TopologyFlag:
    flag_kind: str
    geometry: tuple[Coord, ...]  # one coordinate for points, several for lines
    node_ids: tuple[int, ...] = ()
    edge_ids: tuple[int, ...] = ()
    distance: float | None = None

    @property
    def sort_key(self) -> tuple:
        return (self.node_ids, self.edge_ids, self.geometry)


@dataclass(frozen=True)
class Component:
    component_id: int
    node_ids: tuple[int, ...]
    edge_ids: tuple[int, ...]
    length: float


@dataclass(frozen=True)
class ComponentSet:
    components: tuple[Component, ...]  # longest first

    def __len__(self) -> int:
        return len(self.components)

    def membership(self) -> dict[int, int]:
        """edge_id -> component_id"""
        return {e: c.component_id for c in self.components for e in c.edge_ids}

    @property
    def total_length(self) -> float:
        return float(sum(c.length for c in self.components))


def _require_positive(name: str, value: float) -> None:
    if not value > 0:
        raise ValueError(f"{name} must be positive")


def dangling_nodes(graph: NetworkGraph, grid: AnalysisGrid | None = None
                   ) -> tuple[list[int], CellValues]:
    """Nodes of degree one, plus their count and density per cell."""
    nodes = [n for n in graph.nodes if graph.degree(n) == 1]
    per_cell: CellValues = {}
    if grid is not None:
        counts = {cid: 0 for cid in grid.cells}
        located = node_cells(graph, grid)
        for n in nodes:
            if located[n] is not None:
                counts[located[n]] += 1
        per_cell = {cid: {"dangling_node_count": float(c),
                          "dangling_node_density_per_km2": c / grid.cell_area_km2}
                    for cid, c in counts.items()}
    return nodes, per_cell


def dangling_flags(graph: NetworkGraph, nodes: Sequence[int]) -> list[TopologyFlag]:
    return [TopologyFlag("dangling_node", (graph.nodes[n].position,), (n,), graph.incident[n])
            for n in nodes]


def overshoots(graph: NetworkGraph, max_length: float = DEFAULT_OVERSHOOT_LENGTH) -> list[int]:
    """Edges no longer than ``max_length`` (inclusive) with a dangling endpoint."""
    _require_positive("max_length", max_length)
    return [e.edge_id for e in graph.edges.values()
            if e.geometric_length <= max_length
            and (graph.degree(e.u) == 1 or graph.degree(e.v) == 1)]


def overshoot_flags(graph: NetworkGraph, edge_ids: Sequence[int]) -> list[TopologyFlag]:
    out = []
    for eid in edge_ids:
        e = graph.edges[eid]
        out.append(TopologyFlag("overshoot", e.geometry, tuple(sorted({e.u, e.v})), (eid,),
                                e.geometric_length))
    return out


def undershoots(graph: NetworkGraph, max_distance: float = DEFAULT_UNDERSHOOT_DISTANCE
                ) -> list[TopologyFlag]:
    """For each dangling node, the nearest edge within ``max_distance``.

    Edges touching the node or any of its graph neighbours are ignored, so a
    dead end never reports the street it hangs off. Ties go to the lower
    edge id; zero distances are not reported.
    """
    _require_positive("max_distance", max_distance)
    dangling = [n for n in graph.nodes if graph.degree(n) == 1]
    if not dangling or not graph.edges:
        return []
    pts = shapely.points([graph.nodes[n].position for n in dangling])
    left, right = graph.edge_tree.query(pts, predicate="dwithin", distance=max_distance)
    candidates: dict[int, list[int]] = defaultdict(list)
    for i, j in zip(left.tolist(), right.tolist()):
        candidates[dangling[i]].append(int(graph.edge_ids[j]))
    flags = []
    for n in dangling:
        if n not in candidates:
            continue
        excluded = set(graph.incident[n])
        for nb in graph.neighbors(n):
            excluded.update(graph.incident[nb])
        pos = graph.nodes[n].position
        best: tuple[float, int] | None = None
        for eid in sorted(candidates[n]):
            if eid in excluded:
                continue
            d = point_polyline_distance(pos, graph.edges[eid].geometry)
            if 0.0 < d <= max_distance and (best is None or d < best[0]):
                best = (d, eid)
        if best is not None:
            d, eid = best
            near = shapely.shortest_line(Point(pos), graph.edges[eid].line)
            flags.append(TopologyFlag("undershoot", tuple(map(tuple, near.coords)), (n,), (eid,), d))
    return flags


def _points_of(geom: shapely.Geometry) -> list[Coord]:
    if geom.is_empty:
        return []
    if geom.geom_type == "Point":
        return [(geom.x, geom.y)]
    if hasattr(geom, "geoms"):
        return [p for g in geom.geoms for p in _points_of(g)]
    # linear overlap: report where it starts
    return [tuple(geom.coords[0])]


def missing_intersection_nodes(graph: NetworkGraph) -> list[TopologyFlag]:
    """Edge pairs whose geometries meet without sharing an endpoint node,
    unless the constituent feature crossing there is a bridge or tunnel."""
    parts = [(e.edge_id, p) for e in graph.edges.values() for p in e.parts]
    if len(parts) < 2:
        return []
    lines = [LineString(p.geometry) for _, p in parts]
    tree = shapely.STRtree(lines)
    left, right = tree.query(lines, predicate="intersects")
    found: dict[tuple[int, int], set[Coord]] = defaultdict(set)
    for i, j in zip(left.tolist(), right.tolist()):
        if i >= j:
            continue
        (ea, pa), (eb, pb) = parts[i], parts[j]
        if ea == eb or pa.grade_separated or pb.grade_separated:
            continue
        a, b = graph.edges[ea], graph.edges[eb]
        if {a.u, a.v} & {b.u, b.v}:
            continue
        for pt in _points_of(lines[i].intersection(lines[j])):
            found[(min(ea, eb), max(ea, eb))].add((round(pt[0], 9), round(pt[1], 9)))
    flags = []
    for pair in sorted(found):
        for pt in sorted(found[pair]):
            flags.append(TopologyFlag("missing_intersection_node", (pt,), (), pair))
    return flags


def components(graph: NetworkGraph) -> ComponentSet:
    """Connected components ordered by descending infrastructure length.

    Component ids follow the lowest node id of each component; equal lengths
    keep id order.
    """
    ids = list(graph.nodes)
    index = {n: i for i, n in enumerate(ids)}
    uf = _UnionFind(len(ids))
    for e in graph.edges.values():
        uf.union(index[e.u], index[e.v])
    groups: dict[int, list[int]] = defaultdict(list)
    for n in ids:
        groups[uf.find(index[n])].append(n)
    node_comp = {}
    raw = []
    for cid, root in enumerate(sorted(groups, key=lambda r: groups[r][0])):
        for n in groups[root]:
            node_comp[n] = cid
        raw.append((cid, tuple(groups[root])))
    edges_of: dict[int, list[int]] = defaultdict(list)
    length: dict[int, float] = defaultdict(float)
    for e in graph.edges.values():
        c = node_comp[e.u]
        edges_of[c].append(e.edge_id)
        length[c] += e.infrastructure_length
    comps = [Component(cid, nodes, tuple(edges_of[cid]), length[cid]) for cid, nodes in raw]
    comps.sort(key=lambda c: (-c.length, c.component_id))
    return ComponentSet(tuple(comps))


def zipf_series(comps: ComponentSet) -> list[tuple[int, float]]:
    return [(rank, c.length) for rank, c in enumerate(comps.components, start=1)]


def component_gaps(graph: NetworkGraph, comps: ComponentSet,
                   max_distance: float = DEFAULT_COMPONENT_GAP) -> list[TopologyFlag]:
    """Edge pairs from different components no farther apart than ``max_distance``."""
    _require_positive("max_distance", max_distance)
    if len(comps) < 2:
        return []
    member = comps.membership()
    lines = [e.line for e in graph.edges.values()]
    left, right = graph.edge_tree.query(lines, predicate="dwithin", distance=max_distance)
    flags = []
    for i, j in zip(left.tolist(), right.tolist()):
        if i >= j:
            continue
        ea, eb = int(graph.edge_ids[i]), int(graph.edge_ids[j])
        if member[ea] == member[eb]:
            continue
        link = shapely.shortest_line(lines[i], lines[j])
        d = float(shapely.length(link))
        if d <= max_distance:
            flags.append(TopologyFlag("component_gap", tuple(map(tuple, link.coords)),
                                      (), (ea, eb), d))
    flags.sort(key=lambda f: f.edge_ids)
    return flags


def component_cells(graph: NetworkGraph, comps: ComponentSet, grid: AnalysisGrid,
                    edge_cells: dict[int, dict[int, float]] | None = None) -> dict[int, set[int]]:
    """component_id -> cells its edges pass through."""
    if edge_cells is None:
        edge_cells = edge_cell_lengths(graph, grid)
    out: dict[int, set[int]] = {}
    for c in comps.components:
        cells: set[int] = set()
        for eid in c.edge_ids:
            cells.update(cid for cid, length in edge_cells[eid].items() if length > 0)
        out[c.component_id] = cells
    return out


def reachable_cells(graph: NetworkGraph, comps: ComponentSet, grid: AnalysisGrid,
                    edge_cells: dict[int, dict[int, float]] | None = None) -> dict[int, set[int]]:
    """cell -> set of cells sharing at least one component with it (self included)."""
    reach: dict[int, set[int]] = defaultdict(set)
    for cells in component_cells(graph, comps, grid, edge_cells).values():
        for cid in cells:
            reach[cid] |= cells
    return dict(sorted(reach.items()))


def cell_reachability(graph: NetworkGraph, grid: AnalysisGrid, comps: ComponentSet | None = None,
                      edge_cells: dict[int, dict[int, float]] | None = None) -> CellValues:
    """Percent of network-holding cells reachable from each network-holding cell."""
    if comps is None:
        comps = components(graph)
    reach = reachable_cells(graph, comps, grid, edge_cells)
    nonempty = len(reach)
    return {cid: {"reachable_cells": float(len(cells)),
                  "reachable_pct": 100.0 * len(cells) / nonempty}
            for cid, cells in reach.items()}


def component_lengths(comps: ComponentSet) -> np.ndarray:
    return np.array([c.length for c in comps.components], dtype=float)
