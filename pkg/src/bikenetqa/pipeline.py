"""Glue that runs the analysis stages for one data set or a pair of them."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

from .compare import ComparisonResult, NetworkBundle, compare_networks, largest_component_overlay, zipf_compare
from .config import DatasetConfig, RunConfig
from .errors import InputError
from .graph import NetworkGraph, build_graph, graph_summary, simplify
from .grid import AnalysisGrid, CellValues, cell_density, edge_cell_lengths, make_grid
from .ingest import EdgeRecord, StudyArea, classify, clip_to_study_area, parse_geojson, parse_osm_xml
from .matching import (EdgeMatchSummary, MatchParams, Segment, SegmentMatch, UnmatchedReport,
                       aggregate_matches, match_segments, segmentize, unmatched_report)
from .runlog import RunLog
from .tags import TagAnalysisConfig, TagFlag, contradictions, missing_tags, tag_patterns
from .topology import (ComponentSet, TopologyFlag, cell_reachability, component_gaps, components,
                       dangling_flags, dangling_nodes, missing_intersection_nodes, overshoot_flags,
                       overshoots, undershoots)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_study_area(cfg: RunConfig) -> StudyArea:
    return StudyArea.from_geojson(cfg.study_area_path.read_bytes(), cfg.crs_label, cfg.unit)


def load_dataset(ds: DatasetConfig, area: StudyArea, log: RunLog) -> list[EdgeRecord]:
    """Parse, classify and clip one input file."""
    try:
        data = ds.path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {ds.path}: {exc}") from exc
    if ds.format == "osm_xml":
        raw = parse_osm_xml(data, ds.ruleset, ds.projection, log=log)
    else:
        raw = parse_geojson(data, ds.attribute_map, ds.ruleset, ds.attribute_defaults,
                            ds.id_property, log=log)
    log.info("parsed", dataset=ds.role, features=len(raw))
    return clip_to_study_area(classify(raw, ds.ruleset), area, log=log)


@dataclass
class TagResults:
    missing: list[TagFlag]
    coverage: CellValues
    contradictions: list[TagFlag]
    patterns: CellValues


@dataclass
class IntrinsicResult:
    role: str
    grid: AnalysisGrid
    raw_graph: NetworkGraph
    graph: NetworkGraph
    density: CellValues
    components: ComponentSet
    dangling: list[int]
    dangling_cells: CellValues
    flags: dict[str, list[TopologyFlag]]
    reachability: CellValues
    tags: TagResults | None = None
    input_digest: str = ""
    warnings: list[str] = field(default_factory=list)

    def bundle(self) -> NetworkBundle:
        return NetworkBundle(self.role, self.graph, self.grid, self.components, self.density,
                             self.reachability)

    def summary(self) -> dict:
        s = graph_summary(self.graph)
        out = {
            "dataset": self.role,
            "raw_graph": graph_summary(self.raw_graph),
            "simplified_graph": s,
            "topology": {k: len(v) for k, v in self.flags.items()},
            "components": {
                "count": len(self.components),
                "largest_length_m": self.components.components[0].length if len(self.components) else 0.0,
                "total_length_m": self.components.total_length,
            },
            "global_density": {
                "study_area_cells": len(self.grid.cells),
                "infrastructure_length_m": s["infrastructure_length_m"],
            },
        }
        if self.tags is not None:
            out["tags"] = {
                "missing_tag_flags": len(self.tags.missing),
                "contradiction_flags": len(self.tags.contradictions),
            }
        out["grid"] = self.grid.signature()
        return out


def analyze(records: Sequence[EdgeRecord], grid: AnalysisGrid, cfg: RunConfig, role: str,
            tag_analysis: bool, tagged: bool = True, log: RunLog | None = None) -> IntrinsicResult:
    """Graph, grid, topology and (optionally) tag analysis for one data set."""
    log = log or RunLog()
    th = cfg.thresholds
    raw = build_graph(records, th.snap, tagged=tagged)
    graph = simplify(raw, cfg.breaking_attributes)
    log.info("graph_built", dataset=role, nodes=len(graph.nodes), edges=len(graph.edges))
    edge_cells = edge_cell_lengths(graph, grid)
    density = cell_density(graph, grid, cfg.density_area, edge_cells)
    comps = components(graph)
    dangling, dangling_cells = dangling_nodes(graph, grid)
    flags = {
        "dangling_node": dangling_flags(graph, dangling),
        "overshoot": overshoot_flags(graph, overshoots(graph, th.overshoot)),
        "undershoot": undershoots(graph, th.undershoot),
        "missing_intersection_node": missing_intersection_nodes(graph),
        "component_gap": component_gaps(graph, comps, th.component_gap),
    }
    reach = cell_reachability(graph, grid, comps, edge_cells)
    tags = None
    if tag_analysis:
        if not tagged:
            log.warn("tag_analysis_skipped", dataset=role, reason="input carries no raw OSM tags")
        else:
            tags = run_tag_analysis(graph, grid, cfg.tags, edge_cells)
    log.info("analysis_done", dataset=role)
    return IntrinsicResult(role, grid, raw, graph, density, comps, dangling, dangling_cells, flags,
                           reach, tags)


def run_tag_analysis(graph: NetworkGraph, grid: AnalysisGrid, config: TagAnalysisConfig,
                     edge_cells: dict | None = None) -> TagResults:
    missing, coverage = missing_tags(graph, config, grid, edge_cells)
    contra = contradictions(graph, config) if config.contradiction_rules else []
    patterns = tag_patterns(graph, config.pattern_keys, grid) if config.pattern_keys else {}
    return TagResults(missing, coverage, contra, patterns)


def run_intrinsic(cfg: RunConfig, role: str, area: StudyArea, grid: AnalysisGrid,
                  log: RunLog) -> IntrinsicResult:
    ds = cfg.datasets[role]
    records = load_dataset(ds, area, log)
    is_osm = ds.format == "osm_xml" or role == "osm"
    if ds.tag_analysis and not is_osm:
        log.warn("tag_analysis_skipped", dataset=role, reason="reference data carry no raw OSM tags")
    result = analyze(records, grid, cfg, role, tag_analysis=ds.tag_analysis and is_osm,
                     tagged=is_osm, log=log)
    result.input_digest = sha256_file(ds.path)
    return result


@dataclass
class MatchingResult:
    params: MatchParams
    segments_a: list[Segment]
    segments_b: list[Segment]
    matches_ab: list[SegmentMatch]
    matches_ba: list[SegmentMatch]
    summaries_a: list[EdgeMatchSummary]
    summaries_b: list[EdgeMatchSummary]
    unmatched: UnmatchedReport

    def summary(self) -> dict:
        def side(summaries: list[EdgeMatchSummary], matches: list[SegmentMatch]) -> dict:
            total = sum(s.total_length for s in summaries)
            matched = sum(s.matched_length for s in summaries)
            return {
                "edges": len(summaries),
                "edges_matched": sum(1 for s in summaries if s.status == "matched"),
                "segments": len(matches),
                "segments_matched": sum(1 for m in matches if m.matched),
                "matched_length_share": matched / total if total > 0 else 0.0,
            }

        return {"a_to_b": side(self.summaries_a, self.matches_ab),
                "b_to_a": side(self.summaries_b, self.matches_ba)}


def run_matching(a: NetworkGraph, b: NetworkGraph, params: MatchParams, jobs: int = 1) -> MatchingResult:
    seg_a = segmentize(a, params.segment_length)
    seg_b = segmentize(b, params.segment_length)
    ab = match_segments(seg_a, seg_b, params, jobs=jobs)
    ba = match_segments(seg_b, seg_a, params, jobs=jobs)
    sa = aggregate_matches(ab, seg_a, seg_b, a, params.min_fraction, params.compared_attributes)
    sb = aggregate_matches(ba, seg_b, seg_a, b, params.min_fraction, params.compared_attributes)
    return MatchingResult(params, seg_a, seg_b, ab, ba, sa, sb, unmatched_report(sa, sb, a, b))


@dataclass
class ExtrinsicResult:
    comparison: ComparisonResult
    zipf: dict
    overlay: dict
    matching: MatchingResult


def run_extrinsic(a: IntrinsicResult, b: IntrinsicResult, cfg: RunConfig, jobs: int,
                  log: RunLog) -> ExtrinsicResult:
    ba, bb = a.bundle(), b.bundle()
    comparison = compare_networks(ba, bb)
    zipf = zipf_compare(a.components, b.components, cfg.thresholds.zipf_outlier_ratio, a.role, b.role)
    overlay = largest_component_overlay(ba, bb, log)
    matching = run_matching(a.graph, b.graph, cfg.matching, jobs)
    log.info("extrinsic_done")
    return ExtrinsicResult(comparison, zipf, overlay, matching)


def make_analysis_grid(cfg: RunConfig, area: StudyArea, log: RunLog) -> AnalysisGrid:
    return make_grid(area, cfg.cell_size, log)

