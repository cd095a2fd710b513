"""TOML run configuration.

Sections: ``[study_area]``, ``[osm]``, ``[reference]``, ``[thresholds]``,
``[grid]``, ``[matching]``, ``[tags]`` plus the optional ``[graph]`` and
``[output]``. Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, InputError
from .graph import DEFAULT_BREAKING_ATTRIBUTES, DEFAULT_SNAP_TOLERANCE
from .grid import DEFAULT_CELL_SIZE, DENSITY_AREAS
from .ingest import (ClassificationRuleset, Projection, affine, default_osm_ruleset,
                     default_reference_ruleset, equirectangular, parse_conjunction)
from .matching import MatchParams
from .tags import TagAnalysisConfig
from .topology import DEFAULT_COMPONENT_GAP, DEFAULT_OVERSHOOT_LENGTH, DEFAULT_UNDERSHOOT_DISTANCE

ROLES = ("osm", "reference")
FORMATS = ("osm_xml", "geojson")


@dataclass(frozen=True)
class DatasetConfig:
    role: str
    path: Path
    format: str
    ruleset: ClassificationRuleset
    attribute_map: Mapping[str, str] | None = None
    attribute_defaults: Mapping[str, Any] = field(default_factory=dict)
    id_property: str | None = None
    projection: Projection | None = None
    tag_analysis: bool = False


@dataclass(frozen=True)
class Thresholds:
    snap: float = DEFAULT_SNAP_TOLERANCE
    overshoot: float = DEFAULT_OVERSHOOT_LENGTH
    undershoot: float = DEFAULT_UNDERSHOOT_DISTANCE
    component_gap: float = DEFAULT_COMPONENT_GAP
    zipf_outlier_ratio: float = 10.0


@dataclass(frozen=True)
class RunConfig:
    study_area_path: Path
    crs_label: str
    unit: str
    datasets: Mapping[str, DatasetConfig]
    thresholds: Thresholds = Thresholds()
    cell_size: float = DEFAULT_CELL_SIZE
    density_area: str = "full_cell"
    breaking_attributes: tuple[str, ...] = DEFAULT_BREAKING_ATTRIBUTES
    tags: TagAnalysisConfig = TagAnalysisConfig()
    matching: MatchParams = MatchParams()
    output_dir: Path = Path("bikenetqa-output")
    overwrite: bool = False
    jobs: int = 0
    config_hash: str = ""

    @property
    def effective_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    def with_overrides(self, output_dir: Path | None = None, overwrite: bool | None = None,
                       jobs: int | None = None) -> "RunConfig":
        changes: dict[str, Any] = {}
        if output_dir is not None:
            changes["output_dir"] = Path(output_dir)
        if overwrite:
            changes["overwrite"] = True
        if jobs is not None:
            if jobs < 0:
                raise ConfigError("--jobs must be >= 0")
            changes["jobs"] = jobs
        return replace(self, **changes)


def _positive(section: str, key: str, value: Any) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} must be a number") from exc
    if not v > 0:
        raise ConfigError(f"[{section}] {key} must be > 0")
    return v


def _projection(section: Mapping[str, Any], role: str) -> Projection | None:
    coords = section.get("coordinates", "projected")
    proj = section.get("projection")
    if coords not in ("projected", "degrees"):
        raise ConfigError(f"[{role}] coordinates must be 'projected' or 'degrees'")
    if coords == "projected":
        return None
    if not proj:
        raise ConfigError(f"[{role}] coordinates are in degrees but no projection is configured")
    kind = proj.get("type")
    if kind == "equirectangular":
        return equirectangular(float(proj["lat0"]), float(proj["lon0"]))
    if kind == "affine":
        m = proj.get("matrix", [])
        if len(m) != 6:
            raise ConfigError(f"[{role}.projection] affine matrix needs 6 numbers")
        return affine(*map(float, m))
    raise ConfigError(f"[{role}.projection] unknown type {kind!r}")


def _resolve(base: Path, value: Any, what: str) -> Path:
    if not value:
        raise ConfigError(f"{what} path is not set")
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def _dataset(role: str, section: Mapping[str, Any], base: Path,
             both_sides: tuple | None) -> DatasetConfig:
    fmt = section.get("format", "osm_xml" if role == "osm" else "geojson")
    if fmt not in FORMATS:
        raise ConfigError(f"[{role}] format must be one of {FORMATS}")
    if "ruleset" in section:
        ruleset = ClassificationRuleset.from_dict(section["ruleset"])
    else:
        ruleset = default_osm_ruleset() if role == "osm" else default_reference_ruleset()
    if both_sides is not None:
        ruleset = replace(ruleset, centerline_both_sides=both_sides)
    path = _resolve(base, section.get("path"), f"[{role}]")
    if not path.is_file():
        raise InputError(f"[{role}] input file not found: {path}")
    return DatasetConfig(
        role=role,
        path=path,
        format=fmt,
        ruleset=ruleset,
        attribute_map=section.get("attribute_map"),
        attribute_defaults=section.get("attribute_defaults", {}),
        id_property=section.get("id_property"),
        projection=_projection(section, role),
        tag_analysis=bool(section.get("tag_analysis", role == "osm")),
    )


def config_digest(data: Mapping[str, Any]) -> str:
    relevant = {k: v for k, v in data.items() if k != "output"}
    text = json.dumps(relevant, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_config(path: str | os.PathLike) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(data, path.parent)


def config_from_dict(data: Mapping[str, Any], base: Path) -> RunConfig:
    area = data.get("study_area") or {}
    unit = area.get("unit", "meter")
    if unit != "meter":
        raise ConfigError(f"[study_area] unit must be 'meter', got {unit!r}")
    area_path = _resolve(base, area.get("path"), "[study_area]")
    if not area_path.is_file():
        raise InputError(f"study area file not found: {area_path}")

    th = data.get("thresholds", {})
    thresholds = Thresholds(
        snap=_positive("thresholds", "snap", th.get("snap", DEFAULT_SNAP_TOLERANCE)),
        overshoot=_positive("thresholds", "overshoot", th.get("overshoot", DEFAULT_OVERSHOOT_LENGTH)),
        undershoot=_positive("thresholds", "undershoot", th.get("undershoot", DEFAULT_UNDERSHOOT_DISTANCE)),
        component_gap=_positive("thresholds", "component_gap", th.get("component_gap", DEFAULT_COMPONENT_GAP)),
        zipf_outlier_ratio=_positive("thresholds", "zipf_outlier_ratio", th.get("zipf_outlier_ratio", 10.0)),
    )
    both_sides = None
    if "centerline_both_sides" in th:
        both_sides = tuple(parse_conjunction(c) for c in th["centerline_both_sides"])

    datasets = {role: _dataset(role, data[role], base, both_sides) for role in ROLES if role in data}
    if not datasets:
        raise ConfigError("no data set configured: add an [osm] and/or [reference] section")

    grid = data.get("grid", {})
    density_area = grid.get("density_area", "full_cell")
    if density_area not in DENSITY_AREAS:
        raise ConfigError(f"[grid] density_area must be one of {DENSITY_AREAS}")

    m = data.get("matching", {})
    try:
        matching = MatchParams(
            segment_length=float(m.get("segment_length", MatchParams.segment_length)),
            buffer_distance=float(m.get("buffer_distance", MatchParams.buffer_distance)),
            hausdorff_threshold=float(m.get("hausdorff_threshold", MatchParams.hausdorff_threshold)),
            angle_threshold=float(m.get("angle_threshold", MatchParams.angle_threshold)),
            min_fraction=float(m.get("min_fraction", MatchParams.min_fraction)),
            compared_attributes=tuple(m.get("compared_attributes", MatchParams.compared_attributes)),
        )
    except ValueError as exc:
        raise ConfigError(f"[matching] {exc}") from exc

    out = data.get("output", {})
    graph = data.get("graph", {})
    breaking = tuple(graph.get("breaking_attributes", DEFAULT_BREAKING_ATTRIBUTES))
    unknown = [b for b in breaking if b not in DEFAULT_BREAKING_ATTRIBUTES]
    if unknown:
        raise ConfigError(f"[graph] unknown breaking attribute(s) {unknown}; "
                          f"allowed: {list(DEFAULT_BREAKING_ATTRIBUTES)}")
    try:
        tags = TagAnalysisConfig.from_dict(data.get("tags", {}))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[tags] {exc}") from exc
    return RunConfig(
        study_area_path=area_path,
        crs_label=str(area.get("crs", "unknown")),
        unit=unit,
        datasets=datasets,
        thresholds=thresholds,
        cell_size=_positive("grid", "cell_size", grid.get("cell_size", DEFAULT_CELL_SIZE)),
        density_area=density_area,
        breaking_attributes=breaking,
        tags=tags,
        matching=matching,
        output_dir=_resolve(base, out.get("dir", "bikenetqa-output"), "[output]"),
        overwrite=bool(out.get("overwrite", False)),
        jobs=int(out.get("jobs", 0)),
        config_hash=config_digest(data),
    )
