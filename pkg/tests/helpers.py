"""Build analysed bundles directly from edge records."""

from __future__ import annotations

from shapely.geometry import box

from bikenetqa.compare import NetworkBundle
from bikenetqa.graph import build_graph, simplify
from bikenetqa.grid import cell_density, make_grid
from bikenetqa.ingest import StudyArea
from bikenetqa.topology import cell_reachability, components


def grid_for(x1: float = 2000, y1: float = 2000, cell: float = 1000):
    return make_grid(StudyArea(box(0, 0, x1, y1)), cell)


def bundle(name, recs, grid) -> NetworkBundle:
    g = simplify(build_graph(recs))
    comps = components(g)
    return NetworkBundle(name, g, grid, comps, cell_density(g, grid), cell_reachability(g, grid, comps))


def run_config(**kw):
    from pathlib import Path

    from bikenetqa.config import RunConfig

    return RunConfig(Path("area.geojson"), "EPSG:25832", "meter", {}, **kw)


def intrinsic(role, recs, grid, tagged=True, tag_analysis=True, cfg=None):
    from bikenetqa.pipeline import analyze

    return analyze(recs, grid, cfg or run_config(), role, tag_analysis=tag_analysis, tagged=tagged)
