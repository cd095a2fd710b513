"""OSM tag completeness, contradictions and spatial tagging patterns."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .errors import ConfigError, TagAnalysisError
from .graph import GraphEdge, NetworkGraph
from .grid import AnalysisGrid, CellValues, edge_cell_lengths
from .ingest import TagPredicate

# illustrative only; pick keys that matter for the intended use
DEFAULT_TAGS_OF_INTEREST = ("surface", "width", "lit")
NO_VALUE = "<none>"


@dataclass(frozen=True)
class TagAnalysisConfig:
    tags_of_interest: tuple[str, ...] = DEFAULT_TAGS_OF_INTEREST
    contradiction_rules: tuple[tuple[TagPredicate, TagPredicate], ...] = ()
    pattern_keys: tuple[str, ...] = ("highway",)

    def __post_init__(self) -> None:
        for a, b in self.contradiction_rules:
            if a == b:
                raise ConfigError(f"contradiction rule compares {a} with itself")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TagAnalysisConfig":
        rules = []
        for pair in data.get("contradictions", []):
            if len(pair) != 2:
                raise ConfigError(f"contradiction rule needs exactly two predicates: {pair!r}")
            rules.append((TagPredicate.parse(pair[0]), TagPredicate.parse(pair[1])))
        return cls(
            tags_of_interest=tuple(data.get("tags_of_interest", DEFAULT_TAGS_OF_INTEREST)),
            contradiction_rules=tuple(rules),
            pattern_keys=tuple(data.get("pattern_keys", ("highway",))),
        )


@dataclass(frozen=True, order=True)
class TagFlag:
    edge_id: int
    flag_kind: str
    index: int = 0  # key or rule position, used for ordering
    detail: str = field(default="", compare=False)


def _require_tags(graph: NetworkGraph) -> None:
    if not graph.tagged:
        raise TagAnalysisError("tag analysis requires tagged (OSM) input")


def tag_present(edge: GraphEdge, key: str) -> bool:
    """A merged edge has a tag only if every constituent feature has it."""
    return all(key in t and t[key] != "" for t in edge.tags)


def missing_tags(graph: NetworkGraph, config: TagAnalysisConfig, grid: AnalysisGrid,
                 edge_cells: dict[int, dict[int, float]] | None = None
                 ) -> tuple[list[TagFlag], CellValues]:
    """Flag each edge once per missing key; per-cell length-weighted coverage in percent.

    Only cells holding infrastructure get coverage values.
    """
    _require_tags(graph)
    keys = config.tags_of_interest
    if not keys:
        raise ConfigError("tags_of_interest is empty")
    if edge_cells is None:
        edge_cells = edge_cell_lengths(graph, grid)
    flags = []
    total: dict[int, float] = {}
    tagged: dict[int, dict[str, float]] = {}
    for e in graph.edges.values():
        present = {k: tag_present(e, k) for k in keys}
        for i, k in enumerate(keys):
            if not present[k]:
                flags.append(TagFlag(e.edge_id, "missing_tag", i, k))
        for cid, length in edge_cells.get(e.edge_id, {}).items():
            infra = length * e.multiplier
            total[cid] = total.get(cid, 0.0) + infra
            row = tagged.setdefault(cid, {k: 0.0 for k in keys})
            for k in keys:
                if present[k]:
                    row[k] += infra
    coverage: CellValues = {}
    for cid in sorted(total):
        if total[cid] <= 0:
            continue
        values = {}
        for k in keys:
            pct = 100.0 * tagged[cid][k] / total[cid]
            values[f"tag_coverage_pct:{k}"] = pct
            values[f"tag_missing_pct:{k}"] = 100.0 - pct
        coverage[cid] = values
    return sorted(flags), coverage


def contradictions(graph: NetworkGraph, config: TagAnalysisConfig) -> list[TagFlag]:
    """Flag an edge once per rule whose two sides both match.

    Merged edges are tested against the union of their constituents' tags.
    """
    _require_tags(graph)
    if not config.contradiction_rules:
        raise ConfigError("no contradiction rules configured")
    flags = []
    for e in graph.edges.values():
        for i, (a, b) in enumerate(config.contradiction_rules):
            if a.matches_any(e.tags) and b.matches_any(e.tags):
                flags.append(TagFlag(e.edge_id, "contradiction", i, f"{a} / {b}"))
    return sorted(flags)


def pattern_of(tags: Mapping[str, str], keys: Sequence[str]) -> str:
    return "|".join(tags.get(k) or NO_VALUE for k in keys)


def tag_patterns(graph: NetworkGraph, pattern_keys: Sequence[str], grid: AnalysisGrid) -> CellValues:
    """Per cell, the value combination of ``pattern_keys`` covering the most
    infrastructure length, and its share in percent.

    Each constituent feature of a merged edge keeps its own pattern.
    Ties go to the lexicographically smallest pattern.
    """
    _require_tags(graph)
    if not pattern_keys:
        raise ConfigError("pattern_keys is empty")
    lengths: dict[int, dict[str, float]] = {}
    for e in graph.edges.values():
        for part in e.parts:
            pattern = pattern_of(part.tags, pattern_keys)
            for cid, length in grid.pieces(part.geometry):
                row = lengths.setdefault(cid, {})
                row[pattern] = row.get(pattern, 0.0) + length * e.multiplier
    out: CellValues = {}
    for cid in sorted(lengths):
        row = lengths[cid]
        total = sum(row.values())
        if total <= 0:
            continue
        dominant = min(row, key=lambda p: (-row[p], p))
        out[cid] = {"dominant_pattern": dominant, "dominant_share_pct": 100.0 * row[dominant] / total,
                    "pattern_count": float(len(row))}
    return out
