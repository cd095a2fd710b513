"""Command-line entry point.

    bikenetqa intrinsic --config run.toml --role osm
    bikenetqa compare   --config run.toml
    bikenetqa full      --config run.toml [--only osm|reference|compare]

Exit codes: 0 success, 1 configuration error, 2 input parse error,
3 output error, 4 grid mismatch between analyses.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ROLES, RunConfig, load_config
from .errors import BikeNetQAError, ConfigError, GridMismatchError
from .grid import AnalysisGrid
from .ingest import StudyArea
from .pipeline import IntrinsicResult, load_study_area, make_analysis_grid, run_extrinsic, run_intrinsic, sha256_file
from .report import QualityReport, emit_layers
from .runlog import RunLog
from .serialize import dumps

LOG_LEVEL_ENV = "BIKENETQA_LOG_LEVEL"


def _metadata(cfg: RunConfig, roles: Sequence[str], results: Sequence[IntrinsicResult]) -> dict:
    return {
        "tool_version": __version__,
        "config_hash": cfg.config_hash,
        "crs": cfg.crs_label,
        "study_area_sha256": sha256_file(cfg.study_area_path),
        "inputs": {r.role: {"format": cfg.datasets[r.role].format, "sha256": r.input_digest}
                   for r in results if r.role in roles},
    }


def _setup(cfg: RunConfig, log: RunLog) -> tuple[StudyArea, AnalysisGrid]:
    area = load_study_area(cfg)
    return area, make_analysis_grid(cfg, area, log)


def _run_roles(cfg: RunConfig, roles: Sequence[str], area: StudyArea, grid: AnalysisGrid,
               log: RunLog) -> list[IntrinsicResult | BikeNetQAError]:
    """Run intrinsic analyses, concurrently when allowed; errors are returned in place."""

    def one(role: str) -> IntrinsicResult | BikeNetQAError:
        try:
            return run_intrinsic(cfg, role, area, grid, log)
        except BikeNetQAError as exc:
            return exc

    if cfg.effective_jobs > 1 and len(roles) > 1:
        with ThreadPoolExecutor(max_workers=len(roles)) as pool:
            return list(pool.map(one, roles))
    return [one(r) for r in roles]


def _emit_intrinsic(cfg: RunConfig, result: IntrinsicResult, log: RunLog) -> None:
    report = QualityReport(_metadata(cfg, [result.role], [result]), [result])
    emit_layers(report, cfg.output_dir / result.role, cfg.overwrite)
    log.info("outputs_written", stage=result.role)


def cmd_intrinsic(cfg: RunConfig, role: str, log: RunLog) -> int:
    if role not in cfg.datasets:
        raise ConfigError(f"data set {role!r} is not configured")
    area, grid = _setup(cfg, log)
    result = run_intrinsic(cfg, role, area, grid, log)
    _emit_intrinsic(cfg, result, log)
    return 0


def _check_stale_grids(cfg: RunConfig, grid: AnalysisGrid) -> None:
    current = json.loads(dumps(grid.signature()))
    for role in ROLES:
        path = cfg.output_dir / role / "summary.json"
        if not path.is_file():
            continue
        try:
            stored = json.loads(path.read_text(encoding="utf-8")).get("grid")
        except (OSError, json.JSONDecodeError):
            continue
        if stored != current:
            raise GridMismatchError(f"existing {role} results in {path.parent} were computed on a "
                                    "different grid; rerun the intrinsic analysis with --overwrite")


def _require_both(cfg: RunConfig) -> None:
    missing = [r for r in ROLES if r not in cfg.datasets]
    if missing:
        raise ConfigError(f"comparison needs both data sets; missing [{missing[0]}]")


def _compare_stage(cfg: RunConfig, a: IntrinsicResult, b: IntrinsicResult, log: RunLog) -> None:
    ext = run_extrinsic(a, b, cfg, cfg.effective_jobs, log)
    report = QualityReport(_metadata(cfg, ROLES, [a, b]), [a, b], ext)
    emit_layers(report, cfg.output_dir / "compare", cfg.overwrite)
    log.info("outputs_written", stage="compare")


def cmd_compare(cfg: RunConfig, log: RunLog) -> int:
    _require_both(cfg)
    area, grid = _setup(cfg, log)
    _check_stale_grids(cfg, grid)
    results = _run_roles(cfg, ROLES, area, grid, log)
    for r in results:
        if isinstance(r, BikeNetQAError):
            raise r
    _compare_stage(cfg, results[0], results[1], log)
    return 0


def cmd_full(cfg: RunConfig, log: RunLog, only: str | None = None) -> int:
    """Both intrinsic analyses, then the comparison. Results of a stage that
    succeeded are written even when another stage fails."""
    if only in ROLES:
        return cmd_intrinsic(cfg, only, log)
    if only == "compare":
        return cmd_compare(cfg, log)
    _require_both(cfg)
    area, grid = _setup(cfg, log)
    results = _run_roles(cfg, ROLES, area, grid, log)
    first_error: BikeNetQAError | None = None
    for r in results:
        if isinstance(r, BikeNetQAError):
            first_error = first_error or r
            continue
        try:
            _emit_intrinsic(cfg, r, log)
        except BikeNetQAError as exc:
            first_error = first_error or exc
    if first_error is not None:
        raise first_error
    _compare_stage(cfg, results[0], results[1], log)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bikenetqa",
                                     description="Quality assessment of bicycle infrastructure network data")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--overwrite", action="store_true", help="replace existing results")
        p.add_argument("--jobs", type=int, help="parallelism degree (0 = all cores)")
        p.add_argument("--verbose", action="store_true", help="JSON progress lines on stderr")

    p = sub.add_parser("intrinsic", help="analyse one data set on its own")
    common(p)
    p.add_argument("--role", choices=ROLES, default="osm")
    p = sub.add_parser("compare", help="compare the OSM and reference data sets, incl. feature matching")
    common(p)
    p = sub.add_parser("full", help="intrinsic analysis of both data sets followed by the comparison")
    common(p)
    p.add_argument("--only", choices=(*ROLES, "compare"), help="run a single stage")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get(LOG_LEVEL_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    log = RunLog(echo=args.verbose)
    cfg: RunConfig | None = None
    try:
        cfg = load_config(args.config).with_overrides(
            Path(args.out) if args.out else None, args.overwrite, args.jobs)
        if args.command == "intrinsic":
            code = cmd_intrinsic(cfg, args.role, log)
        elif args.command == "compare":
            code = cmd_compare(cfg, log)
        else:
            code = cmd_full(cfg, log, args.only)
    except BikeNetQAError as exc:
        print(f"bikenetqa: error: {exc}", file=sys.stderr)
        code = exc.exit_code
    if cfg is not None and cfg.output_dir.exists():
        log.write(cfg.output_dir / "runlog.jsonl")
    return code


if __name__ == "__main__":
    sys.exit(main())
