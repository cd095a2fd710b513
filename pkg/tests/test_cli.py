import json
import subprocess
import sys

import pytest

from bikenetqa.cli import main

import synth

AREA = synth.square_polygon(0, 0, 1200, 1200)


@pytest.fixture
def inputs(tmp_path):
    lines = synth.lattice_lines(3, 3, 300.0, (100, 100))
    synth.write_osm_xml(tmp_path / "osm.xml", lines,
                        lambda k: {"highway": "cycleway", "surface": "asphalt"} if k % 2 else {"highway": "cycleway"})
    synth.write_reference_geojson(tmp_path / "ref.geojson", [[(x + 1, y) for x, y in l] for l in lines[:-3]])
    return tmp_path


def _cfg(d, osm=True, ref=True, extra="", cell_size=1000.0, name="run.toml"):
    return str(synth.write_config(d / name, AREA, d / "osm.xml" if osm else None,
                                  d / "ref.geojson" if ref else None, extra, cell_size))


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "runlog.jsonl"}


def test_intrinsic_osm(inputs):
    out = inputs / "out"
    assert main(["intrinsic", "--config", _cfg(inputs), "--role", "osm", "--out", str(out)]) == 0
    assert (out / "osm" / "summary.json").is_file()
    assert (out / "osm" / "flags" / "missing_tag.geojson").is_file()
    assert (out / "runlog.jsonl").is_file()


def test_reference_tag_analysis_skipped_with_warning(inputs):
    out = inputs / "out"
    cfg = _cfg(inputs, extra="")
    text = open(cfg).read().replace('id_property = "fid"', 'id_property = "fid"\ntag_analysis = true')
    open(cfg, "w").write(text)
    assert main(["intrinsic", "--config", cfg, "--role", "reference", "--out", str(out)]) == 0
    assert not (out / "reference" / "flags" / "missing_tag.geojson").exists()
    events = [json.loads(l) for l in (out / "runlog.jsonl").read_text().splitlines()]
    assert any(e["event"] == "tag_analysis_skipped" and e["level"] == "warning" for e in events)


def test_missing_input_exit_2(inputs, capsys):
    (inputs / "osm.xml").unlink()
    assert main(["intrinsic", "--config", _cfg(inputs), "--role", "osm", "--out", str(inputs / "o")]) == 2
    assert "osm.xml" in capsys.readouterr().err


def test_bad_config_exit_1(inputs):
    bad = inputs / "bad.toml"
    bad.write_text("[study_area\n")
    assert main(["full", "--config", str(bad)]) == 1
    assert main(["full", "--config", _cfg(inputs, extra="[thresholds]\novershoot = -1\n")]) == 1
    assert main(["full", "--config", str(inputs / "none.toml")]) == 1


def test_compare_needs_both_roles(inputs, capsys):
    assert main(["compare", "--config", _cfg(inputs, ref=False), "--out", str(inputs / "o")]) == 1
    assert "reference" in capsys.readouterr().err


def test_compare_outputs(inputs):
    out = inputs / "out"
    assert main(["compare", "--config", _cfg(inputs), "--out", str(out)]) == 0
    for name in ("summary.json", "match/segments_osm_to_reference.csv", "match/unmatched_osm.geojson",
                 "overlay/largest_component_reference.geojson", "report.html"):
        assert (out / "compare" / name).is_file(), name


def test_stale_grid_exit_4(inputs):
    out = str(inputs / "out")
    assert main(["intrinsic", "--config", _cfg(inputs), "--role", "osm", "--out", out]) == 0
    cfg = _cfg(inputs, cell_size=500.0, name="other.toml")
    assert main(["compare", "--config", cfg, "--out", out]) == 4


def test_full_run_and_rerun(inputs):
    out = inputs / "out"
    assert main(["full", "--config", _cfg(inputs), "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"osm", "reference", "compare", "runlog.jsonl"}
    assert main(["full", "--config", _cfg(inputs), "--out", str(out)]) == 3
    assert main(["full", "--config", _cfg(inputs), "--out", str(out), "--overwrite"]) == 0


def test_full_reference_failure_keeps_osm(inputs):
    (inputs / "ref.geojson").write_text("{ not json")
    out = inputs / "out"
    assert main(["full", "--config", _cfg(inputs), "--out", str(out)]) == 2
    assert (out / "osm" / "manifest.json").is_file()
    assert not (out / "compare").exists()


def test_full_equals_sequential_stages(inputs):
    cfg = _cfg(inputs)
    assert main(["full", "--config", cfg, "--out", str(inputs / "a"), "--jobs", "2"]) == 0
    seq = str(inputs / "b")
    for args in (["intrinsic", "--role", "osm"], ["intrinsic", "--role", "reference"], ["compare"]):
        assert main([*args, "--config", cfg, "--out", seq]) == 0
    assert _tree(inputs / "a") == _tree(inputs / "b")


def test_only_stage(inputs):
    out = inputs / "out"
    assert main(["full", "--config", _cfg(inputs), "--out", str(out), "--only", "reference"]) == 0
    assert [p.name for p in out.iterdir() if p.is_dir()] == ["reference"]


def test_verbose_progress_on_stderr(inputs):
    cmd = [sys.executable, "-m", "bikenetqa.cli", "intrinsic", "--config", _cfg(inputs),
           "--role", "osm", "--out", str(inputs / "o"), "--verbose"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0
    lines = [json.loads(l) for l in proc.stderr.splitlines() if l.startswith("{")]
    assert any(l["event"] == "graph_built" for l in lines)
