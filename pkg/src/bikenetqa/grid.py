"""Square analysis grid anchored at the study-area bounding box.

Cell ids are row-major with row 0 at the bottom: ``cell_id = row * ncols + col``.
Edges are credited to cells by cutting them at grid lines, so every meter of a
polyline lands in exactly one cell and per-cell sums add up to the total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterator, Sequence

from shapely.geometry import box

from .geometry import Coord
from .graph import NetworkGraph
from .ingest import StudyArea
from .runlog import RunLog

DEFAULT_CELL_SIZE = 1000.0
DENSITY_AREAS = ("full_cell", "clipped_cell")

CellValues = dict[int, dict[str, Any]]


@dataclass(frozen=True)
class Cell:
    cell_id: int
    col: int
    row: int
    bounds: tuple[float, float, float, float]
    centroid: Coord
    clipped_area: float

    @property
    def ring(self) -> list[Coord]:
        x0, y0, x1, y1 = self.bounds
        return [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]


@dataclass(frozen=True)
class AnalysisGrid:
    cell_size: float
    origin: Coord
    ncols: int
    nrows: int
    cells: dict[int, Cell]

    @property
    def cell_ids(self) -> list[int]:
        return list(self.cells)

    @property
    def cell_area_km2(self) -> float:
        return self.cell_size**2 / 1e6

    def signature(self) -> dict:
        """What must agree between two analyses for them to be comparable."""
        return {
            "cell_size": self.cell_size,
            "origin": list(self.origin),
            "ncols": self.ncols,
            "nrows": self.nrows,
            "cell_ids": self.cell_ids,
        }

    def area_km2(self, cell_id: int, density_area: str = "full_cell") -> float:
        if density_area == "clipped_cell":
            return self.cells[cell_id].clipped_area / 1e6
        return self.cell_area_km2

    def _index(self, value: float, start: float) -> list[int]:
        q = (value - start) / self.cell_size
        f = math.floor(q)
        return [f - 1, f] if q == f else [f]

    def locate(self, point: Coord) -> int | None:
        """Retained cell containing ``point``; points on a shared cell edge go
        to the candidate with the lowest cell id."""
        cols = self._index(point[0], self.origin[0])
        rows = self._index(point[1], self.origin[1])
        best = None
        for r in rows:
            for c in cols:
                if 0 <= r < self.nrows and 0 <= c < self.ncols:
                    cid = r * self.ncols + c
                    if cid in self.cells and (best is None or cid < best):
                        best = cid
        return best

    def pieces(self, coords: Sequence[Coord]) -> Iterator[tuple[int, float]]:
        """Yield ``(cell_id, length)`` for the parts of a polyline cut at grid
        lines. Parts outside retained cells are skipped."""
        x0, y0 = self.origin
        s = self.cell_size
        for (ax, ay), (bx, by) in zip(coords[:-1], coords[1:]):
            dx, dy = bx - ax, by - ay
            seg = math.hypot(dx, dy)
            if seg == 0.0:
                continue
            ts = [0.0, 1.0]
            for a, d, o in ((ax, dx, x0), (ay, dy, y0)):
                if d == 0.0:
                    continue
                lo, hi = sorted(((a - o) / s, (a + d - o) / s))
                for k in range(math.floor(lo) + 1, math.ceil(hi)):
                    ts.append((o + k * s - a) / d)
            ts = sorted(set(t for t in ts if 0.0 <= t <= 1.0))
            for t0, t1 in zip(ts[:-1], ts[1:]):
                if t1 <= t0:
                    continue
                tm = 0.5 * (t0 + t1)
                cid = self.locate((ax + tm * dx, ay + tm * dy))
                if cid is not None:
                    yield cid, (t1 - t0) * seg


def make_grid(area: StudyArea, cell_size: float = DEFAULT_CELL_SIZE,
              log: RunLog | None = None) -> AnalysisGrid:
    """Tile the bounding box and keep cells overlapping the polygon with positive area."""
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    minx, miny, maxx, maxy = area.boundary.bounds
    ncols = max(1, math.ceil((maxx - minx) / cell_size - 1e-9))
    nrows = max(1, math.ceil((maxy - miny) / cell_size - 1e-9))
    if cell_size >= max(maxx - minx, maxy - miny) and log is not None:
        log.warn("single_cell_grid", cell_size=cell_size)
    cells = {}
    for row in range(nrows):
        for col in range(ncols):
            bx0, by0 = minx + col * cell_size, miny + row * cell_size
            bounds = (bx0, by0, bx0 + cell_size, by0 + cell_size)
            overlap = area.boundary.intersection(box(*bounds)).area
            if overlap > 0.0:
                cid = row * ncols + col
                cells[cid] = Cell(cid, col, row, bounds,
                                  (bx0 + cell_size / 2, by0 + cell_size / 2), float(overlap))
    return AnalysisGrid(float(cell_size), (float(minx), float(miny)), ncols, nrows, cells)


def edge_cell_lengths(graph: NetworkGraph, grid: AnalysisGrid) -> dict[int, dict[int, float]]:
    """edge_id -> {cell_id: clipped geometric length}."""
    out: dict[int, dict[int, float]] = {}
    for e in graph.edges.values():
        acc: dict[int, float] = {}
        for cid, length in grid.pieces(e.geometry):
            acc[cid] = acc.get(cid, 0.0) + length
        out[e.edge_id] = acc
    return out


def node_cells(graph: NetworkGraph, grid: AnalysisGrid) -> dict[int, int | None]:
    return {n.node_id: grid.locate(n.position) for n in graph.nodes.values()}


def cell_density(graph: NetworkGraph, grid: AnalysisGrid, density_area: str = "full_cell",
                 edge_cells: dict[int, dict[int, float]] | None = None) -> CellValues:
    """Per-cell infrastructure length, edge density (m/km²) and node density.

    Clipped parts keep the multiplier of their edge, so infrastructure length
    scales linearly with clipped geometric length.
    """
    if density_area not in DENSITY_AREAS:
        raise ValueError(f"density_area must be one of {DENSITY_AREAS}")
    if edge_cells is None:
        edge_cells = edge_cell_lengths(graph, grid)
    infra = {cid: 0.0 for cid in grid.cells}
    geo = {cid: 0.0 for cid in grid.cells}
    for eid, parts in edge_cells.items():
        m = graph.edges[eid].multiplier
        for cid, length in parts.items():
            geo[cid] += length
            infra[cid] += length * m
    nodes = {cid: 0 for cid in grid.cells}
    for cid in node_cells(graph, grid).values():
        if cid is not None:
            nodes[cid] += 1
    out: CellValues = {}
    for cid in grid.cells:
        area = grid.area_km2(cid, density_area)
        out[cid] = {
            "geometric_length_m": geo[cid],
            "infrastructure_length_m": infra[cid],
            "edge_density_m_per_km2": infra[cid] / area if area > 0 else 0.0,
            "node_count": float(nodes[cid]),
            "node_density_per_km2": nodes[cid] / area if area > 0 else 0.0,
        }
    return out

