"""Acceptance suite. Each test records its criterion name so the terminal
summary prints one PASS/FAIL line per criterion, and checks its own runtime
budget. Expected values come from brute-force oracles written here against
shapely primitives, not from the package's own helpers."""

from __future__ import annotations

import math
import random
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
import shapely
from shapely.geometry import LineString, box

import synth
from bikenetqa.cli import main
from bikenetqa.compare import compare_networks, zipf_compare
from bikenetqa.graph import build_graph, infrastructure_length, simplify
from bikenetqa.grid import cell_density, make_grid
from bikenetqa.ingest import StudyArea
from bikenetqa.matching import MatchParams, aggregate_matches, match_segments, segmentize
from bikenetqa.topology import (cell_reachability, component_gaps, components, dangling_nodes,
                                missing_intersection_nodes, overshoots, undershoots)
from helpers import bundle
from synth import random_planar_network, record

pytestmark = pytest.mark.acceptance

# (bidirectional, mapping_method, both_sides) -> multiplier, written out in full
MULTIPLIER_TABLE = {
    (False, "true_geometry", False): 1,
    (False, "true_geometry", True): 1,
    (False, "centerline", False): 1,
    (False, "centerline", True): 2,
    (True, "true_geometry", False): 2,
    (True, "true_geometry", True): 2,
    (True, "centerline", False): 2,
    (True, "centerline", True): 2,
}


class Budget:
    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, *_):
        elapsed = time.perf_counter() - self.start
        if exc_type is None:
            assert elapsed < self.seconds, f"took {elapsed:.1f} s, budget {self.seconds} s"


# -- oracles -----------------------------------------------------------------

def _lines(geoms):
    return np.array([LineString(g) for g in geoms], dtype=object)


def _adjacency(graph):
    adj = defaultdict(set)
    for e in graph.edges.values():
        adj[e.u].add(e.v)
        adj[e.v].add(e.u)
    return adj


def oracle_node_labels(graph):
    """Depth-first flood fill; label = first node reached."""
    adj = _adjacency(graph)
    label = {}
    for n in graph.nodes:
        if n in label:
            continue
        stack = [n]
        while stack:
            x = stack.pop()
            if x not in label:
                label[x] = n
                stack.extend(adj[x])
    return label


def oracle_component_count(graph):
    return len(set(oracle_node_labels(graph).values()))


def oracle_degree(graph):
    deg = defaultdict(int)
    for e in graph.edges.values():
        deg[e.u] += 1
        deg[e.v] += 1
    return deg


def oracle_overshoots(graph, thr):
    deg = oracle_degree(graph)
    return {eid for eid, e in graph.edges.items()
            if LineString(e.geometry).length <= thr and 1 in (deg[e.u], deg[e.v])}


def oracle_undershoots(graph, thr):
    """dangling node -> nearest edge, by distance to every edge of the graph."""
    deg = oracle_degree(graph)
    ids = np.array(list(graph.edges))
    lines = _lines(graph.edges[i].geometry for i in ids)
    ends = np.array([(graph.edges[i].u, graph.edges[i].v) for i in ids])
    out = {}
    for n, node in graph.nodes.items():
        if deg[n] != 1:
            continue
        near = set(ends[(ends == n).any(axis=1)].ravel())
        excluded = np.isin(ends, list(near)).any(axis=1)
        d = shapely.distance(shapely.points(node.position), lines)
        ok = (~excluded) & (d > 0) & (d <= thr)
        if ok.any():
            k = np.lexsort((ids[ok], d[ok]))[0]
            out[n] = int(ids[ok][k])
    return out


def oracle_crossings(graph):
    parts = [(eid, p) for eid, e in graph.edges.items() for p in e.parts]
    lines = _lines(p.geometry for _, p in parts)
    hit = shapely.intersects(lines[:, None], lines[None, :])
    out = set()
    for i, j in zip(*np.nonzero(np.triu(hit, 1))):
        (ea, pa), (eb, pb) = parts[i], parts[j]
        a, b = graph.edges[ea], graph.edges[eb]
        if ea == eb or pa.grade_separated or pb.grade_separated or {a.u, a.v} & {b.u, b.v}:
            continue
        out.add((min(ea, eb), max(ea, eb)))
    return out


def oracle_gaps(graph, thr):
    label = oracle_node_labels(graph)
    ids = list(graph.edges)
    lines = _lines(graph.edges[i].geometry for i in ids)
    comp = np.array([label[graph.edges[i].u] for i in ids])
    d = shapely.distance(lines[:, None], lines[None, :])
    mask = np.triu((d <= thr) & (comp[:, None] != comp[None, :]), 1)
    return {(min(ids[i], ids[j]), max(ids[i], ids[j])) for i, j in zip(*np.nonzero(mask))}


def oracle_cell_lengths(graph, grid):
    """cell -> (geometric, infrastructure) length via shapely clipping."""
    out = {}
    for cid, cell in grid.cells.items():
        b = box(*cell.bounds)
        geo = infra = 0.0
        for e in graph.edges.values():
            piece = LineString(e.geometry).intersection(b).length
            geo += piece
            infra += piece * MULTIPLIER_TABLE[(e.bidirectional, e.mapping_method,
                                               e.multiplier == 2 and not e.bidirectional)]
        out[cid] = (geo, infra)
    return out


def oracle_reachability(graph, grid):
    label = oracle_node_labels(graph)
    cells_of = defaultdict(set)
    for e in graph.edges.values():
        line = LineString(e.geometry)
        for cid, cell in grid.cells.items():
            if line.intersection(box(*cell.bounds)).length > 0:
                cells_of[label[e.u]].add(cid)
    reach = defaultdict(set)
    for cells in cells_of.values():
        for c in cells:
            reach[c] |= cells
    return {c: 100.0 * len(r) / len(reach) for c, r in reach.items()}, reach


# -- 1 -----------------------------------------------------------------------

def test_infrastructure_length_rule(record_property):
    record_property("criterion", "1. infrastructure-length rule")
    with Budget(1.0):
        bidir = build_graph([record(0, [(0, 0), (100, 0)], bidirectional=True)])
        assert bidir.edges[0].infrastructure_length == 200.0
        assert infrastructure_length(record(0, [(0, 0), (100, 0)], bidirectional=True)) == 200.0

        rng = random.Random(1)
        recs = []
        for i in range(1000):
            x, y = rng.uniform(0, 1e4), rng.uniform(0, 1e4)
            a = rng.uniform(0, 2 * math.pi)
            length = rng.uniform(0.5, 500)
            recs.append(record(i, [(x, y), (x + length * math.cos(a), y + length * math.sin(a))],
                               bidirectional=rng.random() < 0.5,
                               mapping_method=rng.choice(["true_geometry", "centerline"]),
                               both_sides=rng.random() < 0.5))
        g = build_graph(recs)
        assert len(g.edges) == 1000
        for r in recs:
            e = g.edges[r.edge_id]
            expected = MULTIPLIER_TABLE[(r.bidirectional, r.mapping_method, r.both_sides)]
            assert e.multiplier == expected
            assert e.multiplier in (1, 2)
            assert e.infrastructure_length == e.geometric_length * expected
            assert infrastructure_length(r) / LineString(r.geometry).length == pytest.approx(expected,
                                                                                           rel=1e-12)


# -- 2 -----------------------------------------------------------------------

def test_simplification_invariants(record_property):
    record_property("criterion", "2. simplification invariants")
    rng = random.Random(2)
    with Budget(30.0):
        for _ in range(100):
            recs = random_planar_network(rng, max_edges=500)
            raw = build_graph(recs)
            simple = simplify(raw)
            geo = sum(LineString(r.geometry).length for r in recs)
            infra = sum(LineString(r.geometry).length
                        * MULTIPLIER_TABLE[(r.bidirectional, r.mapping_method, r.both_sides)] for r in recs)
            assert math.isclose(simple.total_geometric_length, geo, rel_tol=1e-9)
            assert math.isclose(simple.total_infrastructure_length, infra, rel_tol=1e-9)
            assert oracle_component_count(simple) == oracle_component_count(raw) == len(components(simple))
            deg = oracle_degree(simple)
            incident = defaultdict(list)
            for e in simple.edges.values():
                incident[e.u].append(e)
                incident[e.v].append(e)
            for n, d in deg.items():
                if d != 2:
                    continue
                a, b = incident[n]
                if a.edge_id == b.edge_id:
                    continue  # self-loop anchor of a ring
                key = lambda e: (e.protection, e.bidirectional, e.mapping_method, e.multiplier)
                assert key(a) != key(b), f"node {n} could still be merged"


# -- 3 -----------------------------------------------------------------------

KINDS = ("overshoot", "undershoot", "crossing", "gap")


def planted_network(rng):
    """Lattice with at most one defect per even cell; returns records and
    the expected (defect source id, partner source id) per kind."""
    n = rng.randint(6, 9)
    ox, oy = rng.uniform(0, 500), rng.uniform(0, 500)
    recs = []
    ids = {}

    def add(coords, **kw):
        recs.append(record(len(recs), coords, **kw))
        return recs[-1].source_id

    for j in range(n + 1):
        for i in range(n):
            ids[("h", i, j)] = add([(ox + i * 100, oy + j * 100), (ox + (i + 1) * 100, oy + j * 100)])
    for i in range(n + 1):
        for j in range(n):
            ids[("v", i, j)] = add([(ox + i * 100, oy + j * 100), (ox + i * 100, oy + (j + 1) * 100)])

    # the top row is skipped: there the top-left corner merges the cell's top
    # edge down to the spur anchor, which the neighbour exclusion then ignores
    cells = [(i, j) for i in range(0, n, 2) for j in range(0, n - 1, 2)]
    rng.shuffle(cells)
    variants = [(k, planted) for k in KINDS for planted in (True, False)]
    expected = {k: set() for k in KINDS}
    for idx, (i, j) in enumerate(cells):
        kind, planted = variants[idx % len(variants)]
        x0, y0 = ox + i * 100, oy + j * 100
        if kind == "overshoot":
            length = rng.uniform(0.5, 3.0) if planted else rng.uniform(3.5, 6.0)
            s = add([(x0, y0), (x0 + length / math.sqrt(2), y0 + length / math.sqrt(2))])
            if planted:
                expected[kind].add((s,))
        elif kind == "undershoot":
            d = rng.uniform(0.5, 3.0) if planted else rng.uniform(3.5, 8.0)
            s = add([(x0, y0), (x0 + 50, y0 + 100 - d)])
            if planted:
                expected[kind].add((s, ids[("h", i, j + 1)]))
        elif kind == "crossing":
            a = add([(x0, y0), (x0 + 100, y0 + 100)])
            b = add([(x0 + 100, y0), (x0, y0 + 100)], grade_separated=not planted)
            if planted:
                expected[kind].add(tuple(sorted((a, b))))
        else:
            g = rng.uniform(4.0, 10.0) if planted else rng.uniform(10.5, 30.0)
            s = add([(x0 + 30, y0 + g), (x0 + 70, y0 + g)])
            if planted:
                expected[kind].add(tuple(sorted((s, ids[("h", i, j)]))))
    return recs, expected


def test_topology_detectors_recover_planted_defects(record_property):
    record_property("criterion", "3. topology detector oracle equivalence")
    rng = random.Random(3)
    planted = defaultdict(int)
    with Budget(60.0):
        for _ in range(50):
            recs, expected = planted_network(rng)
            for kind, items in expected.items():
                planted[kind] += len(items)
            g = simplify(build_graph(recs))
            comps = components(g)
            edge_of = {p.source_id: eid for eid, e in g.edges.items() for p in e.parts}

            def src(eid):
                # the defect edge is never merged, so it has exactly one part
                return g.edges[eid].source_ids

            # dangling census
            found_dangling = set(dangling_nodes(g)[0])
            deg = oracle_degree(g)
            assert found_dangling == {n for n in g.nodes if deg[n] == 1}

            over = set(overshoots(g, 3.0))
            assert over == oracle_overshoots(g, 3.0)
            assert {src(e) for e in over} == expected["overshoot"]

            under = undershoots(g, 3.0)
            assert {f.node_ids[0]: f.edge_ids[0] for f in under} == oracle_undershoots(g, 3.0)
            got = set()
            for f in under:
                (spur,) = g.incident[f.node_ids[0]]
                assert len(g.edges[spur].parts) == 1
                assert edge_of[expected_top(expected, src(spur)[0])] == f.edge_ids[0]
                got.add((src(spur)[0], expected_top(expected, src(spur)[0])))
            assert got == expected["undershoot"]

            cross = {f.edge_ids for f in missing_intersection_nodes(g)}
            assert cross == oracle_crossings(g)
            assert {tuple(sorted(src(a) + src(b))) for a, b in cross} == expected["crossing"]

            gaps = {f.edge_ids for f in component_gaps(g, comps, 10.0)}
            assert gaps == oracle_gaps(g, 10.0)
            want = {tuple(sorted((edge_of[a], edge_of[b]))) for a, b in expected["gap"]}
            assert gaps == want
    assert all(planted[k] >= 50 for k in KINDS), dict(planted)


def expected_top(expected, spur_source):
    for s, top in expected["undershoot"]:
        if s == spur_source:
            return top
    raise AssertionError(f"{spur_source} flagged as undershoot but not planted")


# -- 4 -----------------------------------------------------------------------

def straight_edges(rng, count=60):
    """Straight edges of random direction, one per 300 m block so no two are close."""
    lines = []
    side = math.ceil(math.sqrt(count))
    for k in range(count):
        cx, cy = (k % side) * 300 + 150, (k // side) * 300 + 150
        a = rng.uniform(0, math.pi)
        half = rng.uniform(40, 120)
        dx, dy = half * math.cos(a), half * math.sin(a)
        lines.append([(cx - dx, cy - dy), (cx + dx, cy + dy)])
    return lines


def offset(line, d):
    (x0, y0), (x1, y1) = line
    length = math.hypot(x1 - x0, y1 - y0)
    nx, ny = -(y1 - y0) / length * d, (x1 - x0) / length * d
    return [(x0 + nx, y0 + ny), (x1 + nx, y1 + ny)]


def test_matching_self_identity_and_offsets(record_property):
    record_property("criterion", "4. matching self-identity and offsets")
    rng = random.Random(4)
    params = MatchParams()
    with Budget(60.0):
        for _ in range(5):
            g = simplify(build_graph(random_planar_network(rng, max_edges=500)))
            segs = segmentize(g, params.segment_length)
            matches = match_segments(segs, segs, params)
            assert all(m.matched and m.hausdorff == 0.0 and m.angle == 0.0 for m in matches)
            summary = aggregate_matches(matches, segs, segs, g)
            assert len(summary) == len(g.edges)
            assert all(s.matched_fraction == 1.0 for s in summary)

        lines = straight_edges(rng)
        base = simplify(build_graph(synth.records(lines)))
        src = segmentize(base, params.segment_length)
        for d in (1.0, 5.0, 10.0):
            moved = simplify(build_graph(synth.records([offset(l, d) for l in lines])))
            tgt = segmentize(moved, params.segment_length)
            matches = match_segments(src, tgt, params)
            assert all(m.matched for m in matches)
            hs = np.array([m.hausdorff for m in matches])
            assert hs.min() >= d - 0.02 and hs.max() <= d + 1.0, (d, hs.min(), hs.max())
        far = simplify(build_graph(synth.records([offset(l, 13.0) for l in lines])))
        assert not any(m.matched for m in match_segments(src, segmentize(far), params))


# -- 5 -----------------------------------------------------------------------

def test_grid_conservation(record_property):
    record_property("criterion", "5. grid conservation")
    rng = random.Random(5)
    with Budget(30.0):
        for k in range(50):
            recs = [record(r.edge_id, [(x + 600, y + 600) for x, y in r.geometry], r.protection,
                           r.bidirectional, r.mapping_method, both_sides=r.both_sides)
                    for r in random_planar_network(rng, max_edges=300)]
            cell = rng.choice([250.0, 400.0, 777.0, 1000.0])
            grid = make_grid(StudyArea(box(0, 0, 3400, 3400)), cell)
            g = simplify(build_graph(recs))
            dens = cell_density(g, grid)
            total = sum(v["infrastructure_length_m"] for v in dens.values())
            assert math.isclose(total, g.total_infrastructure_length, rel_tol=1e-6)
            if k % 5 == 0:
                for cid, (geo, infra) in oracle_cell_lengths(g, grid).items():
                    assert dens[cid]["geometric_length_m"] == pytest.approx(geo, rel=1e-6, abs=1e-6)
                    assert dens[cid]["infrastructure_length_m"] == pytest.approx(infra, rel=1e-6, abs=1e-6)


# -- 6 -----------------------------------------------------------------------

def fragments(rng):
    """Several independent random networks scattered over a 6 km square."""
    recs = []
    for _ in range(rng.randint(2, 5)):
        dx, dy = rng.uniform(0, 4000), rng.uniform(0, 4000)
        for r in random_planar_network(rng, max_edges=60, extent=rng.uniform(300, 1500)):
            recs.append(record(len(recs), [(x + dx + 400, y + dy + 400) for x, y in r.geometry]))
    return recs


def test_reachability_symmetry_and_bounds(record_property):
    record_property("criterion", "6. reachability symmetry and bounds")
    rng = random.Random(6)
    grid = make_grid(StudyArea(box(0, 0, 6400, 6400)), 800.0)
    with Budget(15.0):
        multi = 0
        for _ in range(15):
            g = simplify(build_graph(fragments(rng)))
            multi += len(components(g)) > 1
            reach = cell_reachability(g, grid)
            pct, rel = oracle_reachability(g, grid)
            assert {c: v["reachable_pct"] for c, v in reach.items()} == pytest.approx(pct, rel=1e-12)
            for a, cells in rel.items():
                for b in cells:
                    assert a in rel[b]
            assert all(0.0 < v["reachable_pct"] <= 100.0 for v in reach.values())
        assert multi >= 10

        lattice = simplify(build_graph(synth.records(synth.lattice_lines(20, 20, 300.0, (100, 100)))))
        assert len(components(lattice)) == 1
        reach = cell_reachability(lattice, grid)
        assert reach and all(v["reachable_pct"] == 100.0 for v in reach.values())


# -- 7 -----------------------------------------------------------------------

def _fixture(d: Path) -> Path:
    rng = random.Random(7)
    lines = synth.lattice_lines(35, 35, 100.0, (50, 50), subdivide=2)

    def tags(k):
        t = {"highway": "cycleway"}
        if k % 3:
            t["surface"] = "asphalt"
        if k % 5 == 0:
            t["oneway"] = "yes"
        return t

    ref = [[(x + 1.0, y + 0.5) for x, y in line] for line in lines if rng.random() < 0.9]
    synth.write_osm_xml(d / "osm.xml", lines, tags)
    synth.write_reference_geojson(d / "ref.geojson", ref, lambda k: {"bidirectional": k % 4 == 0})
    return synth.write_config(d / "run.toml", synth.square_polygon(0, 0, 3700, 3700),
                              d / "osm.xml", d / "ref.geojson")


def _snapshot(out: Path) -> dict[str, bytes]:
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "runlog.jsonl"}


def test_determinism(record_property, tmp_path):
    record_property("criterion", "7. determinism")
    cfg = _fixture(tmp_path)
    assert len(synth.lattice_lines(35, 35, 100.0, (50, 50), subdivide=2)) == 5040
    snaps = {}
    for jobs, run in ((1, "a"), (1, "b"), (8, "a"), (8, "b")):
        out = tmp_path / f"out-{jobs}-{run}"
        with Budget(60.0):
            assert main(["full", "--config", str(cfg), "--out", str(out), "--jobs", str(jobs)]) == 0
        snaps[(jobs, run)] = _snapshot(out)
    ref = snaps[(1, "a")]
    names = set(ref)
    assert any(n.endswith("summary.json") for n in names)
    assert any(n.endswith(".csv") for n in names)
    assert any(n.endswith(".geojson") for n in names)
    for key, snap in snaps.items():
        assert set(snap) == names, key
        differing = [n for n in names if snap[n] != ref[n]]
        assert not differing, (key, differing)


# -- 8 -----------------------------------------------------------------------

def _negated(x):
    return None if x is None else -x


def test_extrinsic_antisymmetry(record_property):
    record_property("criterion", "8. extrinsic antisymmetry")
    rng = random.Random(8)
    grid = make_grid(StudyArea(box(0, 0, 2600, 2600)), 500.0)
    with Budget(30.0):
        for _ in range(10):
            a = bundle("a", [record(r.edge_id, [(x + 300, y + 300) for x, y in r.geometry],
                                    bidirectional=r.bidirectional) for r in random_planar_network(rng, 200)],
                       grid)
            b = bundle("b", fragments_in(rng, 2600), grid)
            ab, ba = compare_networks(a, b), compare_networks(b, a)
            assert set(ab.global_deltas) == set(ba.global_deltas)
            for m, row in ab.global_deltas.items():
                assert row["difference"] == -ba.global_deltas[m]["difference"]
                assert (row["a"], row["b"]) == (ba.global_deltas[m]["b"], ba.global_deltas[m]["a"])
            assert set(ab.cell_deltas) == set(ba.cell_deltas)
            for cid, row in ab.cell_deltas.items():
                for metric in ("density", "reachability"):
                    x, y = row[metric], ba.cell_deltas[cid][metric]
                    assert x["difference"] == _negated(y["difference"])
                    assert (x["a"], x["b"], x["one_sided"]) == (y["b"], y["a"], y["one_sided"])
            for metric in ("density", "reachability"):
                ma, mb = ab.aggregates[metric]["mean"], ba.aggregates[metric]["mean"]
                assert (ma is None and mb is None) or ma == pytest.approx(-mb, abs=1e-9)

            aa = compare_networks(a, a)
            assert all(row["difference"] == 0 for row in aa.global_deltas.values())
            for row in aa.cell_deltas.values():
                assert row["density"]["difference"] == 0 and row["reachability"]["difference"] == 0
                assert not row["density"]["one_sided"] and not row["reachability"]["one_sided"]
            z = zipf_compare(a.components, a.components)
            assert not z["outlier_flag"] and z["flagged"] == []

        # one dominant component against evenly sized fragments
        big = [record(0, [(100, 100), (2400, 100)]), record(1, [(100, 300), (150, 300)])]
        even = [record(0, [(100, 100), (1000, 100)]), record(1, [(100, 300), (1000, 300)])]
        da, db = bundle("a", big, grid), bundle("b", even, grid)
        zab, zba = zipf_compare(da.components, db.components), zipf_compare(db.components, da.components)
        assert zab["outlier_flag"] and zba["outlier_flag"]
        assert zab["flagged"] == ["a"] and zba["flagged"] == ["b"]
        assert zab["a"]["series"] == zba["b"]["series"]


def fragments_in(rng, extent):
    recs = []
    for _ in range(rng.randint(1, 4)):
        dx, dy = rng.uniform(0, extent - 900), rng.uniform(0, extent - 900)
        for r in random_planar_network(rng, max_edges=80, extent=rng.uniform(200, 600)):
            recs.append(record(len(recs), [(x + dx + 150, y + dy + 150) for x, y in r.geometry],
                               mapping_method=r.mapping_method, both_sides=r.both_sides))
    return recs
