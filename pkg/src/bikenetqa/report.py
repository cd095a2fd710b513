"""Output directory writer: summary JSON, GeoJSON layers, CSV, SVG and HTML.

Every output directory carries a ``manifest.json`` with a SHA-256 digest per
file. The manifest is written first with ``"status": "incomplete"`` and
rewritten as ``"complete"`` once every file is on disk.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from html import escape
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .errors import OutputError
from .graph import graph_to_geojson
from .grid import AnalysisGrid, CellValues
from .pipeline import ExtrinsicResult, IntrinsicResult
from .serialize import (csv_text, dumps, feature, feature_collection, line_geometry, point_geometry,
                        polygon_geometry)
from .svg import GridLayer, LineLayer, PointLayer, render_svg_map, render_zipf_svg
from .topology import TopologyFlag, zipf_series

TOPOLOGY_KINDS = ("dangling_node", "overshoot", "undershoot", "missing_intersection_node",
                  "component_gap")
TAG_KINDS = ("missing_tag", "contradiction")


@dataclass
class QualityReport:
    """Everything one output directory is rendered from."""

    metadata: dict[str, Any]
    intrinsic: list[IntrinsicResult]
    extrinsic: ExtrinsicResult | None = None
    files: dict[str, str] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "extrinsic" if self.extrinsic is not None else "intrinsic"


def _grid_geojson(grid: AnalysisGrid, values: CellValues) -> dict:
    return feature_collection(
        feature(polygon_geometry(cell.ring), {"cell_id": cid, **values.get(cid, {})})
        for cid, cell in grid.cells.items())


def _flag_feature(flag: TopologyFlag) -> dict:
    geom = point_geometry(flag.geometry[0]) if len(flag.geometry) == 1 else line_geometry(flag.geometry)
    return feature(geom, {"flag_kind": flag.flag_kind, "node_ids": list(flag.node_ids),
                          "edge_ids": list(flag.edge_ids), "distance_m": flag.distance})


def _tag_flag_layer(result: IntrinsicResult, flags) -> dict:
    return feature_collection(
        feature(line_geometry(result.graph.edges[f.edge_id].geometry),
                {"edge_id": f.edge_id, "flag_kind": f.flag_kind, "detail": f.detail})
        for f in flags)


def _values(cells: CellValues, metric: str) -> dict[int, float]:
    return {cid: v[metric] for cid, v in cells.items() if metric in v}


def _network_lines(result: IntrinsicResult) -> list:
    return [e.geometry for e in result.graph.edges.values()]


def intrinsic_plots(result: IntrinsicResult) -> dict[str, str]:
    g = result.graph
    role = result.role
    plots = {}
    network = LineLayer(_network_lines(result), f"{role} network", "#555555", 0.8)
    plots["plots/edge_density.svg"] = render_svg_map(
        [GridLayer(result.grid, _values(result.density, "edge_density_m_per_km2"),
                   "infrastructure density (m/km²)"), network], f"{role}: edge density per cell")
    plots["plots/node_density.svg"] = render_svg_map(
        [GridLayer(result.grid, _values(result.density, "node_density_per_km2"), "nodes per km²"),
         network], f"{role}: node density per cell")
    plots["plots/dangling_nodes.svg"] = render_svg_map(
        [GridLayer(result.grid, _values(result.dangling_cells, "dangling_node_density_per_km2"),
                   "dangling nodes per km²"), network,
         PointLayer([g.nodes[n].position for n in result.dangling], "dangling nodes")],
        f"{role}: dangling nodes")
    flags = result.flags
    plots["plots/topology_flags.svg"] = render_svg_map(
        [network,
         LineLayer([g.edges[f.edge_ids[0]].geometry for f in flags["overshoot"]], "overshoots",
                   "#d62728", 2.5),
         LineLayer([f.geometry for f in flags["undershoot"]], "undershoots", "#ff7f0e", 2.5),
         LineLayer([f.geometry for f in flags["component_gap"]], "component gaps", "#9467bd", 2.5),
         PointLayer([f.geometry[0] for f in flags["missing_intersection_node"]],
                    "missing intersection nodes", "#2ca02c", 3.5)],
        f"{role}: topology flags")
    largest = set(result.components.components[0].edge_ids) if len(result.components) else set()
    plots["plots/components.svg"] = render_svg_map(
        [LineLayer([g.edges[e].geometry for e in g.edges if e in largest], "largest component",
                   "#1f4e9c", 1.4),
         LineLayer([g.edges[e].geometry for e in g.edges if e not in largest], "other components",
                   "#d62728", 1.4)],
        f"{role}: disconnected components")
    plots["plots/reachability.svg"] = render_svg_map(
        [GridLayer(result.grid, _values(result.reachability, "reachable_pct"), "cells reachable (%)"),
         network], f"{role}: percent of cells reachable")
    series = zipf_series(result.components)
    if series:
        plots["plots/zipf.svg"] = render_zipf_svg(series, labels=(role, ""),
                                                  title=f"{role}: component length distribution")
    if result.tags is not None:
        for key in sorted({k.split(":", 1)[1] for v in result.tags.coverage.values() for k in v
                           if k.startswith("tag_coverage_pct:")}):
            safe = re.sub(r"[^A-Za-z0-9_.-]", "_", key)
            plots[f"plots/tag_coverage_{safe}.svg"] = render_svg_map(
                [GridLayer(result.grid, _values(result.tags.coverage, f"tag_coverage_pct:{key}"),
                           f"'{key}' present (% of length)"), network],
                f"{role}: coverage of tag '{key}'")
        if result.tags.contradictions:
            plots["plots/tag_contradictions.svg"] = render_svg_map(
                [network, LineLayer([g.edges[f.edge_id].geometry for f in result.tags.contradictions],
                                    "contradicting tags", "#d62728", 2.5)],
                f"{role}: contradicting tags")
    return plots


def intrinsic_files(result: IntrinsicResult, metadata: Mapping[str, Any]) -> dict[str, str]:
    files: dict[str, str] = {}
    summary = {"metadata": dict(metadata), **result.summary()}
    files["summary.json"] = dumps(summary)
    cells: dict[int, dict] = {}
    for layer in (result.density, result.dangling_cells, result.reachability,
                  result.tags.coverage if result.tags else {}, result.tags.patterns if result.tags else {}):
        for cid, vals in layer.items():
            cells.setdefault(cid, {}).update(vals)
    files["grid.geojson"] = dumps(_grid_geojson(result.grid, cells))
    membership = result.components.membership()
    nodes_fc, edges_fc = graph_to_geojson(result.graph, {e: {"component_id": c} for e, c in membership.items()})
    files["nodes.geojson"] = dumps(nodes_fc)
    files["edges.geojson"] = dumps(edges_fc)
    for kind in TOPOLOGY_KINDS:
        files[f"flags/{kind}.geojson"] = dumps(feature_collection(_flag_feature(f) for f in result.flags[kind]))
    if result.tags is not None:
        files["flags/missing_tag.geojson"] = dumps(_tag_flag_layer(result, result.tags.missing))
        files["flags/contradiction.geojson"] = dumps(_tag_flag_layer(result, result.tags.contradictions))
    files["components.csv"] = csv_text(
        ["component_id", "rank", "length_m", "edge_count", "node_count"],
        [(c.component_id, i, c.length, len(c.edge_ids), len(c.node_ids))
         for i, c in enumerate(result.components.components, start=1)])
    files["zipf.csv"] = csv_text(["rank", "length_m"], zipf_series(result.components))
    files.update(intrinsic_plots(result))
    return files


def _edge_match_layer(ext: ExtrinsicResult, side: str, result: IntrinsicResult) -> dict:
    summaries = ext.matching.summaries_a if side == "a" else ext.matching.summaries_b
    return feature_collection(
        feature(line_geometry(result.graph.edges[s.edge_id].geometry),
                {"edge_id": s.edge_id, "status": s.status, "matched_fraction": s.matched_fraction,
                 **{f"agreement:{k}": v for k, v in s.attribute_agreement.items()}})
        for s in summaries)


def _segment_csv(matches, source, target) -> str:
    src = {s.segment_id: s for s in source}
    tgt = {s.segment_id: s for s in target}
    rows = []
    for m in matches:
        s = src[m.source_id]
        t = tgt[m.target_id] if m.matched else None
        rows.append((m.source_id, s.edge_id, m.target_id, t.edge_id if t else None, m.hausdorff, m.angle))
    return csv_text(["source_id", "source_edge_id", "target_id", "target_edge_id", "hausdorff_m",
                     "angle_deg"], rows)


def extrinsic_files(a: IntrinsicResult, b: IntrinsicResult, ext: ExtrinsicResult,
                    metadata: Mapping[str, Any]) -> dict[str, str]:
    files: dict[str, str] = {}
    mr = ext.matching
    files["summary.json"] = dumps({
        "metadata": dict(metadata),
        "comparison": ext.comparison.to_dict(),
        "zipf": {"ratio": ext.zipf["ratio"], "outlier_flag": ext.zipf["outlier_flag"],
                 "flagged": ext.zipf["flagged"],
                 "a": {"name": a.role, "outlier": ext.zipf["a"]["outlier"]},
                 "b": {"name": b.role, "outlier": ext.zipf["b"]["outlier"]}},
        "matching": {"params": {
            "segment_length": mr.params.segment_length,
            "buffer_distance": mr.params.buffer_distance,
            "hausdorff_threshold": mr.params.hausdorff_threshold,
            "angle_threshold": mr.params.angle_threshold,
            "min_fraction": mr.params.min_fraction,
            "compared_attributes": list(mr.params.compared_attributes)}, **mr.summary()},
    })
    cells = {}
    for cid, d in ext.comparison.cell_deltas.items():
        cells[cid] = {
            f"density_{a.role}": d["density"]["a"], f"density_{b.role}": d["density"]["b"],
            "density_difference": d["density"]["difference"], "density_one_sided": d["density"]["one_sided"],
            f"reachable_pct_{a.role}": d["reachability"]["a"], f"reachable_pct_{b.role}": d["reachability"]["b"],
            "reachability_difference": d["reachability"]["difference"],
            "reachability_one_sided": d["reachability"]["one_sided"],
        }
    files["grid.geojson"] = dumps(_grid_geojson(a.grid, cells))
    files[f"overlay/largest_component_{a.role}.geojson"] = dumps(ext.overlay["a"])
    files[f"overlay/largest_component_{b.role}.geojson"] = dumps(ext.overlay["b"])
    sa, sb = ext.zipf["a"]["series"], ext.zipf["b"]["series"]
    n = max(len(sa), len(sb))
    files["zipf.csv"] = csv_text(["rank", f"length_m_{a.role}", f"length_m_{b.role}"],
                                 [(r + 1, sa[r][1] if r < len(sa) else None, sb[r][1] if r < len(sb) else None)
                                  for r in range(n)])
    files[f"match/segments_{a.role}_to_{b.role}.csv"] = _segment_csv(mr.matches_ab, mr.segments_a, mr.segments_b)
    files[f"match/segments_{b.role}_to_{a.role}.csv"] = _segment_csv(mr.matches_ba, mr.segments_b, mr.segments_a)
    files[f"match/edges_{a.role}.geojson"] = dumps(_edge_match_layer(ext, "a", a))
    files[f"match/edges_{b.role}.geojson"] = dumps(_edge_match_layer(ext, "b", b))
    disagree = []
    for side, res, summaries in (("a", a, mr.summaries_a), ("b", b, mr.summaries_b)):
        for s in summaries:
            bad = [k for k, v in s.attribute_agreement.items() if v == "disagree"]
            if s.status == "matched" and bad:
                disagree.append(feature(line_geometry(res.graph.edges[s.edge_id].geometry),
                                        {"dataset": res.role, "edge_id": s.edge_id,
                                         "attributes": ";".join(bad)}))
    files["match/attribute_disagreement.geojson"] = dumps(feature_collection(disagree))
    um = mr.unmatched
    for res, ids, near in ((a, um.a_unmatched, um.a_nearest_other), (b, um.b_unmatched, um.b_nearest_other)):
        files[f"match/unmatched_{res.role}.geojson"] = dumps(feature_collection(
            feature(line_geometry(res.graph.edges[i].geometry),
                    {"edge_id": i, "dataset": res.role, "nearest_other_m": near.get(i)})
            for i in ids))

    # plots
    diff = {cid: d["density"]["difference"] for cid, d in ext.comparison.cell_deltas.items()
            if not d["density"]["one_sided"]}
    files["plots/density_difference.svg"] = render_svg_map(
        [GridLayer(a.grid, diff, f"density {a.role} − {b.role} (m/km²)", diverging=True)],
        f"edge density difference ({a.role} − {b.role})")
    rdiff = {cid: d["reachability"]["difference"] for cid, d in ext.comparison.cell_deltas.items()
             if not d["reachability"]["one_sided"]}
    files["plots/reachability_difference.svg"] = render_svg_map(
        [GridLayer(a.grid, rdiff, f"reachable % {a.role} − {b.role}", diverging=True)],
        f"cell reachability difference ({a.role} − {b.role})")
    files["plots/largest_components.svg"] = render_svg_map(
        [LineLayer([f["geometry"]["coordinates"] for f in ext.overlay["a"]["features"]],
                   f"{a.role} largest component", "#1f4e9c", 2.0),
         LineLayer([f["geometry"]["coordinates"] for f in ext.overlay["b"]["features"]],
                   f"{b.role} largest component", "#d62728", 1.0, dash="4 2")],
        "largest connected components")
    if sa or sb:
        first, second = (sa, sb) if sa else (sb, None)
        files["plots/zipf.svg"] = render_zipf_svg(first, second if sa else None, labels=(a.role, b.role),
                                                  title="component length distributions")
    for side, res, summaries in (("a", a, mr.summaries_a), ("b", b, mr.summaries_b)):
        g = res.graph
        files[f"plots/match_{res.role}.svg"] = render_svg_map(
            [LineLayer([g.edges[s.edge_id].geometry for s in summaries if s.status == "matched"],
                       "matched", "#1f4e9c", 1.4),
             LineLayer([g.edges[s.edge_id].geometry for s in summaries if s.status == "unmatched"],
                       "unmatched", "#d62728", 1.4)],
            f"{res.role}: matched and unmatched features")
    g = a.graph
    files[f"plots/protection_agreement_{a.role}.svg"] = render_svg_map(
        [LineLayer([g.edges[s.edge_id].geometry for s in mr.summaries_a
                    if s.status == "matched" and s.attribute_agreement.get("protection") == "agree"],
                   "same protection level", "#1f4e9c", 1.4),
         LineLayer([g.edges[s.edge_id].geometry for s in mr.summaries_a
                    if s.status == "matched" and s.attribute_agreement.get("protection") == "disagree"],
                   "differing protection level", "#d62728", 1.4)],
        f"{a.role}: protection level of matched features")
    return files


# -- HTML ---------------------------------------------------------------

_CSS = """body{font-family:sans-serif;max-width:1000px;margin:2em auto;color:#222}
table{border-collapse:collapse;margin:1em 0}td,th{border:1px solid #ccc;padding:3px 8px;text-align:right}
th{background:#f3f3f3}figure{margin:1.5em 0}figcaption{color:#555;font-size:90%}
h2{border-bottom:2px solid #1f4e9c;padding-bottom:4px}"""


def _table(rows: list[tuple[str, Any]]) -> str:
    def cell(v: Any) -> str:
        if isinstance(v, float):
            return f"{v:,.2f}"
        return escape(str(v))

    body = "".join(f"<tr><th>{escape(k)}</th><td>{cell(v)}</td></tr>" for k, v in rows)
    return f"<table>{body}</table>"


def _figure(svg: str, source: str) -> str:
    inner = svg.replace('<svg xmlns="http://www.w3.org/2000/svg" version="1.1" ', "<svg ", 1)
    return (f'<figure data-source="{escape(source)}">{inner}'
            f"<figcaption>data: {escape(source)}</figcaption></figure>")


def _intrinsic_section(result: IntrinsicResult, plots: Mapping[str, str], prefix: str, title: str) -> str:
    s = result.summary()
    sg = s["simplified_graph"]
    rows = [
        ("nodes", sg["node_count"]), ("edges", sg["edge_count"]),
        ("geometric length (m)", sg["geometric_length_m"]),
        ("infrastructure length (m)", sg["infrastructure_length_m"]),
        ("protected infrastructure (m)", sg["protection"]["protected"]["infrastructure_length_m"]),
        ("unprotected infrastructure (m)", sg["protection"]["unprotected"]["infrastructure_length_m"]),
        ("components", s["components"]["count"]),
        ("largest component (m)", s["components"]["largest_length_m"]),
    ] + [(f"{k.replace('_', ' ')} flags", v) for k, v in s["topology"].items()]
    if result.tags is not None:
        rows += [("missing-tag flags", len(result.tags.missing)),
                 ("contradiction flags", len(result.tags.contradictions))]
    figs = "".join(_figure(svg, prefix + name) for name, svg in sorted(plots.items()))
    return f'<section id="intrinsic-{escape(result.role)}"><h2>{escape(title)}</h2>{_table(rows)}{figs}</section>'


def render_html(report: QualityReport) -> str:
    """One self-contained page: intrinsic sections, then comparison and matching."""
    sections = []
    if report.extrinsic is None:
        res = report.intrinsic[0]
        plots = {k: v for k, v in report.files.items() if k.endswith(".svg")} or intrinsic_plots(res)
        sections.append(_intrinsic_section(res, plots, "",
                                           f"Intrinsic analysis: {res.role}"))
    else:
        a, b = report.intrinsic
        for res in (a, b):
            sections.append(_intrinsic_section(res, intrinsic_plots(res), f"../{res.role}/",
                                               f"Intrinsic analysis: {res.role}"))
        ext = report.extrinsic
        plots = {k: v for k, v in report.files.items() if k.endswith(".svg")}
        rows = [(f"{m.replace('_', ' ')} ({a.role} / {b.role} / difference)",
                 f"{d['a']:,.2f} / {d['b']:,.2f} / {d['difference']:,.2f}")
                for m, d in ext.comparison.global_deltas.items()]
        agg = ext.comparison.aggregates["density"]
        rows.append(("cells compared (two-sided)", agg["cells"]))
        if agg["mean"] is not None:
            rows.append(("mean density difference (m/km²)", agg["mean"]))
        if ext.zipf["outlier_flag"]:
            rows.append(("largest-component outlier hint", ", ".join(ext.zipf["flagged"])))
        extrinsic_plots = ("plots/density_difference.svg", "plots/reachability_difference.svg",
                           "plots/largest_components.svg", "plots/zipf.svg")
        figs = "".join(_figure(plots[k], k) for k in extrinsic_plots if k in plots)
        sections.append(f'<section id="extrinsic"><h2>Extrinsic comparison</h2>{_table(rows)}{figs}</section>')
        ms = ext.matching.summary()
        rows = [(f"{a.role} → {b.role}: {k.replace('_', ' ')}", v) for k, v in ms["a_to_b"].items()]
        rows += [(f"{b.role} → {a.role}: {k.replace('_', ' ')}", v) for k, v in ms["b_to_a"].items()]
        figs = "".join(_figure(v, k) for k, v in sorted(plots.items()) if k not in extrinsic_plots)
        sections.append(f'<section id="matching"><h2>Feature matching</h2>{_table(rows)}{figs}</section>')
    meta = report.metadata
    head = (f"<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\">"
            f"<title>Bicycle network data quality report</title><style>{_CSS}</style></head><body>"
            f"<h1>Bicycle network data quality report</h1>"
            f"<p>bikenetqa {escape(str(meta.get('tool_version')))}, config "
            f"{escape(str(meta.get('config_hash', ''))[:12])}</p>")
    return head + "".join(sections) + "</body></html>\n"


# -- writing ---------------------------------------------------------------

def build_files(report: QualityReport) -> dict[str, str]:
    if report.extrinsic is None:
        files = intrinsic_files(report.intrinsic[0], report.metadata)
    else:
        a, b = report.intrinsic
        files = extrinsic_files(a, b, report.extrinsic, report.metadata)
    report.files = files
    files["report.html"] = render_html(report)
    return files


def _digest(text: bytes) -> str:
    return hashlib.sha256(text).hexdigest()


def emit_layers(report: QualityReport, out_dir: Path, overwrite: bool = False) -> dict[str, str]:
    """Write all files of ``report`` below ``out_dir``; returns path -> sha256."""
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not overwrite:
        raise OutputError(f"{out_dir} already holds results; pass --overwrite to replace them")
    files = build_files(report)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if overwrite and (out_dir / "manifest.json").exists():
            for old in sorted(out_dir.rglob("*"), reverse=True):
                if old.is_file():
                    old.unlink()
                elif old.is_dir() and not any(old.iterdir()):
                    old.rmdir()
        pending = {name: None for name in sorted(files)}
        (out_dir / "manifest.json").write_text(dumps({"status": "incomplete", "files": pending}),
                                               encoding="utf-8")
        digests = {}
        for name in sorted(files):
            data = files[name].encode("utf-8")
            path = out_dir / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
            digests[name] = _digest(data)
        (out_dir / "manifest.json").write_text(
            dumps({"status": "complete", "tool_version": __version__, "files": digests}), encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write to {out_dir}: {exc}") from exc
    return digests


def verify_manifest(out_dir: Path) -> bool:
    import json

    manifest = json.loads((Path(out_dir) / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("status") != "complete":
        return False
    return all(_digest((Path(out_dir) / name).read_bytes()) == d for name, d in manifest["files"].items())
