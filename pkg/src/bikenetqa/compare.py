"""Extrinsic comparison of two independently analysed networks."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import GridMismatchError
from .graph import NetworkGraph
from .grid import AnalysisGrid, CellValues
from .runlog import RunLog
from .serialize import feature, feature_collection, line_geometry
from .topology import ComponentSet, zipf_series

DEFAULT_OUTLIER_RATIO = 10.0
GLOBAL_METRICS = ("infrastructure_length_m", "node_count", "dangling_node_count",
                  "component_count", "largest_component_share")


@dataclass
class NetworkBundle:
    """The intrinsic results of one data set that the comparison needs."""

    name: str
    graph: NetworkGraph
    grid: AnalysisGrid
    components: ComponentSet
    density: CellValues
    reachability: CellValues
    summary: Mapping[str, Any] = field(default_factory=dict)

    def global_metrics(self) -> dict[str, float | int]:
        total = self.components.total_length
        largest = self.components.components[0].length if len(self.components) else 0.0
        return {
            "infrastructure_length_m": self.graph.total_infrastructure_length,
            "node_count": len(self.graph.nodes),
            "dangling_node_count": sum(1 for n in self.graph.nodes if self.graph.degree(n) == 1),
            "component_count": len(self.components),
            "largest_component_share": largest / total if total > 0 else 0.0,
        }


@dataclass(frozen=True)
class ComparisonResult:
    name_a: str
    name_b: str
    global_deltas: dict[str, dict[str, float]]
    cell_deltas: dict[int, dict[str, Any]]
    aggregates: dict[str, dict[str, float | None]]

    def to_dict(self) -> dict:
        return {
            "a": self.name_a,
            "b": self.name_b,
            "global": self.global_deltas,
            "aggregates": self.aggregates,
            "cells": {str(k): v for k, v in self.cell_deltas.items()},
        }


def _pair(a: float | None, b: float | None) -> dict[str, Any]:
    if a is not None and b is not None:
        return {"a": a, "b": b, "difference": a - b, "one_sided": False}
    return {"a": a, "b": b, "difference": None, "one_sided": True}


def _density_of(values: CellValues, cid: int) -> float | None:
    row = values.get(cid)
    if not row or row.get("infrastructure_length_m", 0.0) <= 0.0:
        return None
    return row["edge_density_m_per_km2"]


def _reach_of(values: CellValues, cid: int) -> float | None:
    row = values.get(cid)
    return None if not row else row["reachable_pct"]


def _stats(deltas: list[float]) -> dict[str, float | None]:
    if not deltas:
        return {"cells": 0, "mean": None, "median": None}
    return {"cells": len(deltas), "mean": sum(deltas) / len(deltas), "median": statistics.median(deltas)}


def compare_networks(a: NetworkBundle, b: NetworkBundle) -> ComparisonResult:
    """Global and per-cell differences ``a - b``.

    A cell where only one network has infrastructure keeps that side's value
    and is marked one-sided; such cells stay out of the aggregate statistics.
    """
    if a.grid.signature() != b.grid.signature():
        raise GridMismatchError("the two analyses were computed on different grids")
    ga, gb = a.global_metrics(), b.global_metrics()
    global_deltas = {m: {"a": ga[m], "b": gb[m], "difference": ga[m] - gb[m]} for m in GLOBAL_METRICS}
    cells: dict[int, dict[str, Any]] = {}
    density_deltas, reach_deltas = [], []
    for cid in a.grid.cells:
        da, db = _density_of(a.density, cid), _density_of(b.density, cid)
        ra, rb = _reach_of(a.reachability, cid), _reach_of(b.reachability, cid)
        if da is None and db is None and ra is None and rb is None:
            continue
        d, r = _pair(da, db), _pair(ra, rb)
        if not d["one_sided"]:
            density_deltas.append(d["difference"])
        if not r["one_sided"]:
            reach_deltas.append(r["difference"])
        cells[cid] = {"density": d, "reachability": r}
    return ComparisonResult(a.name, b.name, global_deltas, cells,
                            {"density": _stats(density_deltas), "reachability": _stats(reach_deltas)})


def largest_component_overlay(a: NetworkBundle, b: NetworkBundle,
                              log: RunLog | None = None) -> dict[str, dict]:
    """The largest component of each network as its own FeatureCollection,
    keyed ``"a"`` and ``"b"``."""
    layers = {}
    for side, bundle in (("a", a), ("b", b)):
        if not len(bundle.components):
            if log is not None:
                log.warn("empty_network_overlay", dataset=bundle.name)
            layers[side] = feature_collection([])
            continue
        comp = bundle.components.components[0]
        layers[side] = feature_collection(
            feature(line_geometry(bundle.graph.edges[eid].geometry),
                    {"edge_id": eid, "component_id": comp.component_id,
                     "infrastructure_length_m": bundle.graph.edges[eid].infrastructure_length})
            for eid in sorted(comp.edge_ids))
    return layers


def has_outlier(series: list[tuple[int, float]], ratio: float = DEFAULT_OUTLIER_RATIO) -> bool:
    """Rank-1 component longer than ``ratio`` times rank 2. Needs two ranks."""
    if len(series) < 2:
        return False
    return series[0][1] > ratio * series[1][1]


def zipf_compare(a: ComponentSet, b: ComponentSet, ratio: float = DEFAULT_OUTLIER_RATIO,
                 name_a: str = "a", name_b: str = "b") -> dict[str, Any]:
    """Both Zipf series plus a hint when exactly one has a dominant largest
    component. The hint is not a quality verdict."""
    sa, sb = zipf_series(a), zipf_series(b)
    oa, ob = has_outlier(sa, ratio), has_outlier(sb, ratio)
    flagged = [n for n, o in ((name_a, oa), (name_b, ob)) if o] if oa != ob else []
    return {
        "ratio": ratio,
        "a": {"name": name_a, "series": sa, "outlier": oa},
        "b": {"name": name_b, "series": sb, "outlier": ob},
        "outlier_flag": oa != ob,
        "flagged": flagged,
    }
