import pytest
from shapely.geometry import box

from bikenetqa.errors import TagAnalysisError
from bikenetqa.graph import build_graph, simplify
from bikenetqa.grid import make_grid
from bikenetqa.ingest import StudyArea, TagPredicate
from bikenetqa.tags import TagAnalysisConfig, contradictions, missing_tags, tag_patterns

from synth import record

GRID = make_grid(StudyArea(box(0, 0, 2000, 1000)), 1000)
CFG = TagAnalysisConfig(tags_of_interest=("surface",),
                        contradiction_rules=((TagPredicate.parse("cycleway=track"),
                                              TagPredicate.parse("bicycle=no")),
                                             (TagPredicate.parse("highway=cycleway"),
                                              TagPredicate.parse("bicycle=no"))))


def test_present_tag_full_coverage():
    g = build_graph([record(0, [(10, 10), (50, 10)], tags={"surface": "asphalt"})])
    flags, cov = missing_tags(g, CFG, GRID)
    assert flags == []
    assert cov == {0: {"tag_coverage_pct:surface": 100.0, "tag_missing_pct:surface": 0.0}}


def test_missing_tag_flag_and_weighted_coverage():
    g = build_graph([record(0, [(10, 10), (70, 10)], tags={"surface": "asphalt"}),
                     record(1, [(10, 50), (50, 50)])])
    flags, cov = missing_tags(g, CFG, GRID)
    assert [(f.edge_id, f.flag_kind, f.detail) for f in flags] == [(1, "missing_tag", "surface")]
    assert cov[0]["tag_coverage_pct:surface"] == pytest.approx(60.0)
    assert 1 not in cov


def test_merged_edge_has_tag_only_if_all_parts_do():
    g = simplify(build_graph([record(0, [(10, 10), (20, 10)], tags={"surface": "a"}),
                              record(1, [(20, 10), (30, 10)])]))
    flags, _ = missing_tags(g, CFG, GRID)
    assert len(flags) == 1


def test_contradictions():
    g = build_graph([record(0, [(0, 0), (1, 0)], tags={"cycleway": "track", "bicycle": "no"}),
                     record(1, [(0, 5), (1, 5)], tags={"cycleway": "track"}),
                     record(2, [(0, 9), (1, 9)], tags={"cycleway": "track", "bicycle": "no",
                                                      "highway": "cycleway"})])
    flags = contradictions(g, CFG)
    assert [(f.edge_id, f.index) for f in flags] == [(0, 0), (2, 0), (2, 1)]


def test_patterns():
    g = build_graph([record(0, [(10, 10), (80, 10)], tags={"highway": "cycleway"}),
                     record(1, [(10, 50), (40, 50)], tags={"highway": "path"}),
                     record(2, [(1100, 50), (1140, 50)], tags={"highway": "cycleway"})])
    p = tag_patterns(g, ("highway",), GRID)
    assert p[0]["dominant_pattern"] == "cycleway"
    assert p[0]["dominant_share_pct"] == pytest.approx(70.0)
    assert p[1]["dominant_share_pct"] == 100.0
    empty = tag_patterns(build_graph([record(0, [(10, 10), (20, 10)], tags={"highway": "x"})]),
                         ("highway",), GRID)
    assert 1 not in empty


def test_untagged_graph_rejected():
    g = build_graph([record(0, [(0, 0), (1, 0)])], tagged=False)
    with pytest.raises(TagAnalysisError, match="tagged"):
        missing_tags(g, CFG, GRID)


def test_config_from_dict():
    cfg = TagAnalysisConfig.from_dict({"tags_of_interest": ["lit"],
                                       "contradictions": [["cycleway=track", "bicycle=no"]]})
    assert cfg.tags_of_interest == ("lit",)
    assert str(cfg.contradiction_rules[0][1]) == "bicycle=no"
