"""Reading OSM XML / GeoJSON inputs and turning them into classified edges.

Classification is driven entirely by a :class:`ClassificationRuleset`: every
rule list is evaluated first-match-wins and must end with a default rule
(an empty predicate conjunction), so every edge always gets a protection
level, a direction flag and a mapping method.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import IO, Any, Callable, Iterable, Mapping, Sequence

import shapely
from shapely.geometry import LineString, MultiLineString, Polygon, shape

from .errors import ConfigError, InputError
from .geometry import Polyline, as_polyline, polyline_length
from .runlog import RunLog

PROTECTION = ("protected", "unprotected")
MAPPING = ("centerline", "true_geometry")
OPERATORS = ("equals", "not-equals", "exists", "one-of")

Projection = Callable[[float, float], tuple[float, float]]


@dataclass(frozen=True)
class TagPredicate:
    """A test on a single tag.

    ``not-equals`` only matches when the key is present with another value;
    an absent key never matches anything except through a missing-tag check.
    """

    key: str
    op: str = "exists"
    values: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.key:
            raise ConfigError("tag predicate with empty key")
        if self.op not in OPERATORS:
            raise ConfigError(f"unknown predicate operator {self.op!r}")
        if self.op != "exists" and not self.values:
            raise ConfigError(f"predicate on {self.key!r} needs a value")

    def matches(self, tags: Mapping[str, str]) -> bool:
        value = tags.get(self.key)
        if value is None:
            return False
        if self.op == "exists":
            return True
        if self.op == "not-equals":
            return value != self.values[0]
        return value in self.values

    def matches_any(self, tag_maps: Iterable[Mapping[str, str]]) -> bool:
        return any(self.matches(t) for t in tag_maps)

    @classmethod
    def parse(cls, spec: str | Mapping[str, Any] | "TagPredicate") -> "TagPredicate":
        """Build from ``"k=v"``, ``"k!=v"``, ``"k=a|b"``, ``"k"`` or a table
        ``{key=..., op=..., value=... | values=[...]}``."""
        if isinstance(spec, TagPredicate):
            return spec
        if isinstance(spec, Mapping):
            values = spec.get("values", spec.get("value", ()))
            if isinstance(values, str):
                values = (values,)
            return cls(str(spec.get("key", "")), str(spec.get("op", "exists")),
                       tuple(str(v) for v in values))
        text = str(spec).strip()
        if "!=" in text:
            k, v = text.split("!=", 1)
            return cls(k.strip(), "not-equals", (v.strip(),))
        if "=" in text:
            k, v = text.split("=", 1)
            vals = tuple(p.strip() for p in v.split("|"))
            return cls(k.strip(), "one-of" if len(vals) > 1 else "equals", vals)
        return cls(text, "exists")

    def __str__(self) -> str:
        if self.op == "exists":
            return self.key
        if self.op == "not-equals":
            return f"{self.key}!={self.values[0]}"
        return f"{self.key}={'|'.join(self.values)}"


Conjunction = tuple[TagPredicate, ...]


def parse_conjunction(spec: Any) -> Conjunction:
    if spec is None:
        return ()
    if isinstance(spec, (str, Mapping, TagPredicate)):
        return (TagPredicate.parse(spec),)
    return tuple(TagPredicate.parse(s) for s in spec)


def conjunction_matches(conj: Conjunction, tags: Mapping[str, str]) -> bool:
    return all(p.matches(tags) for p in conj)


@dataclass(frozen=True)
class Rule:
    when: Conjunction
    value: Any

    def matches(self, tags: Mapping[str, str]) -> bool:
        return conjunction_matches(self.when, tags)


def _first_match(rules: Sequence[Rule], tags: Mapping[str, str]) -> Any:
    for rule in rules:
        if rule.matches(tags):
            return rule.value
    raise AssertionError("rule list without default")  # guarded by validation


@dataclass(frozen=True)
class ClassificationRuleset:
    include: tuple[Conjunction, ...]
    protection_rules: tuple[Rule, ...]
    direction_rules: tuple[Rule, ...]
    mapping_method_rules: tuple[Rule, ...]
    bridge_tunnel_predicates: tuple[TagPredicate, ...] = ()
    # both-sides rule for centerline-mapped features; empty means never
    centerline_both_sides: tuple[Conjunction, ...] = ()

    def __post_init__(self) -> None:
        checks = (
            ("protection", self.protection_rules, PROTECTION),
            ("direction", self.direction_rules, (True, False)),
            ("mapping", self.mapping_method_rules, MAPPING),
        )
        for name, rules, allowed in checks:
            if not rules:
                raise ConfigError(f"{name} rule list is empty")
            if rules[-1].when:
                raise ConfigError(f"{name} rule list must end with a default rule")
            for r in rules:
                if r.value not in allowed:
                    raise ConfigError(f"{name} rule value {r.value!r} not in {allowed}")

    def includes(self, tags: Mapping[str, str]) -> bool:
        if not self.include:
            return True
        return any(conjunction_matches(c, tags) for c in self.include)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ClassificationRuleset":
        def rules(key: str, convert: Callable[[Any], Any] = lambda v: v) -> tuple[Rule, ...]:
            raw = data.get(key)
            if not raw:
                raise ConfigError(f"ruleset is missing the {key!r} rule list")
            return tuple(Rule(parse_conjunction(r.get("when")), convert(r["value"])) for r in raw)

        return cls(
            include=tuple(parse_conjunction(c) for c in data.get("include", [])),
            protection_rules=rules("protection"),
            direction_rules=rules("bidirectional", _as_bool),
            mapping_method_rules=rules("mapping_method"),
            bridge_tunnel_predicates=tuple(
                TagPredicate.parse(p) for p in data.get("bridge_tunnel", [])),
            centerline_both_sides=tuple(
                parse_conjunction(c) for c in data.get("centerline_both_sides", [])),
        )


def _as_bool(v: Any) -> bool:
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("yes", "true", "1"):
        return True
    if str(v).lower() in ("no", "false", "0"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def default_osm_ruleset() -> ClassificationRuleset:
    """Illustrative OSM tag mapping; adapt to local tagging practice."""
    lanes = "lane|track|opposite_lane|opposite_track"
    return ClassificationRuleset.from_dict({
        "include": [
            "highway=cycleway",
            ["highway=path", "bicycle=designated"],
            ["highway=footway", "bicycle=designated"],
            f"cycleway={lanes}",
            f"cycleway:left={lanes}",
            f"cycleway:right={lanes}",
            f"cycleway:both={lanes}",
            "bicycle_road=yes",
        ],
        "protection": [
            {"when": "highway=cycleway", "value": "protected"},
            {"when": "highway=path", "value": "protected"},
            {"when": "highway=footway", "value": "protected"},
            {"when": "cycleway=track|opposite_track", "value": "protected"},
            {"when": "cycleway:both=track", "value": "protected"},
            {"when": "cycleway:left=track", "value": "protected"},
            {"when": "cycleway:right=track", "value": "protected"},
            {"when": [], "value": "unprotected"},
        ],
        "bidirectional": [
            {"when": "oneway:bicycle=no", "value": True},
            {"when": "oneway:bicycle=yes", "value": False},
            {"when": "oneway=yes", "value": False},
            {"when": [], "value": True},
        ],
        "mapping_method": [
            {"when": "highway=cycleway", "value": "true_geometry"},
            {"when": "highway=path", "value": "true_geometry"},
            {"when": "highway=footway", "value": "true_geometry"},
            {"when": [], "value": "centerline"},
        ],
        "bridge_tunnel": ["bridge!=no", "tunnel!=no"],
        "centerline_both_sides": ["cycleway=lane|track", "cycleway:both=lane|track"],
    })


def default_reference_ruleset() -> ClassificationRuleset:
    """Rules for reference data whose attributes were mapped onto the
    ``protection``, ``bidirectional`` and ``mapping_method`` keys."""
    return ClassificationRuleset.from_dict({
        "include": [],
        "protection": [
            {"when": "protection=protected", "value": "protected"},
            {"when": [], "value": "unprotected"},
        ],
        "bidirectional": [
            {"when": "bidirectional=yes|true|True|1", "value": True},
            {"when": [], "value": False},
        ],
        "mapping_method": [
            {"when": "mapping_method=centerline", "value": "centerline"},
            {"when": [], "value": "true_geometry"},
        ],
        "bridge_tunnel": ["bridge=yes|true|True|1", "tunnel=yes|true|True|1"],
    })


@dataclass(frozen=True)
class RawFeature:
    source_id: str
    geometry: Polyline
    tags: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class EdgeRecord:
    edge_id: int
    source_id: str
    geometry: Polyline
    protection: str
    bidirectional: bool
    mapping_method: str
    grade_separated: bool = False
    both_sides: bool = False
    tags: dict[str, str] = field(default_factory=dict)

    @property
    def length(self) -> float:
        return polyline_length(self.geometry)


@dataclass(frozen=True)
class StudyArea:
    boundary: Polygon
    crs_label: str = "unknown"
    declared_unit: str = "meter"

    def __post_init__(self) -> None:
        if self.declared_unit != "meter":
            raise ConfigError(f"study area unit must be 'meter', got {self.declared_unit!r}")
        if not isinstance(self.boundary, Polygon) or self.boundary.is_empty:
            raise ConfigError("study area must be a single polygon")
        if not self.boundary.is_valid:
            raise ConfigError("study area polygon is not simple/valid")
        if self.boundary.area <= 0:
            raise ConfigError("study area polygon has zero area")

    @classmethod
    def from_geojson(cls, data: bytes | str | Mapping[str, Any], crs_label: str = "unknown",
                     declared_unit: str = "meter") -> "StudyArea":
        """Accept a Polygon geometry, a Feature, or a FeatureCollection with one polygon."""
        if isinstance(data, (bytes, str)):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise InputError(f"study area: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        if data.get("type") == "FeatureCollection":
            feats = data.get("features", [])
            if len(feats) != 1:
                raise InputError("study area FeatureCollection must hold exactly one feature")
            data = feats[0]
        if data.get("type") == "Feature":
            data = data.get("geometry") or {}
        try:
            geom = shape(data)
        except Exception as exc:  # shapely raises assorted types here
            raise InputError(f"study area geometry unreadable: {exc}") from exc
        if geom.geom_type == "MultiPolygon" and len(geom.geoms) == 1:
            geom = geom.geoms[0]
        if geom.geom_type != "Polygon":
            raise InputError(f"study area must be a Polygon, got {geom.geom_type}")
        return cls(geom, crs_label, declared_unit)


def equirectangular(lat0: float, lon0: float, radius: float = 6371008.8) -> Projection:
    """Local equirectangular projection around ``(lat0, lon0)`` in meters."""
    k = math.cos(math.radians(lat0))

    def project(lon: float, lat: float) -> tuple[float, float]:
        return (math.radians(lon - lon0) * radius * k, math.radians(lat - lat0) * radius)

    return project


def affine(a: float, b: float, c: float, d: float, xoff: float, yoff: float) -> Projection:
    """``x' = a*x + b*y + xoff``, ``y' = c*x + d*y + yoff`` (x = lon, y = lat)."""

    def project(x: float, y: float) -> tuple[float, float]:
        return (a * x + b * y + xoff, c * x + d * y + yoff)

    return project


def _read_bytes(data: bytes | str | IO[bytes]) -> bytes:
    if isinstance(data, bytes):
        return data
    if isinstance(data, str):
        return data.encode("utf-8")
    return data.read()


def parse_osm_xml(data: bytes | IO[bytes], ruleset: ClassificationRuleset,
                  projection: Projection | None = None,
                  log: RunLog | None = None) -> list[RawFeature]:
    """Return one :class:`RawFeature` per way accepted by ``ruleset.include``.

    Coordinates are ``(lon, lat)`` passed through unchanged unless a
    ``projection`` is given. Ways with fewer than two distinct positions are
    dropped with a warning.
    """
    log = log or RunLog()
    raw = _read_bytes(data)
    try:
        root = ET.fromstring(raw)
    except ET.ParseError as exc:
        line, col = exc.position
        raise InputError(f"malformed OSM XML at line {line}, column {col}: {exc}") from exc

    nodes: dict[str, tuple[float, float]] = {}
    for nd in root.iter("node"):
        try:
            lon, lat = float(nd.attrib["lon"]), float(nd.attrib["lat"])
        except (KeyError, ValueError) as exc:
            raise InputError(f"node {nd.attrib.get('id')!r} lacks usable lat/lon") from exc
        nodes[nd.attrib["id"]] = projection(lon, lat) if projection else (lon, lat)

    features: list[RawFeature] = []
    seen: set[str] = set()
    missing: list[str] = []
    for way in root.iter("way"):
        way_id = way.attrib.get("id", "")
        tags = {t.attrib["k"]: t.attrib.get("v", "") for t in way.iter("tag")}
        if not ruleset.includes(tags):
            continue
        refs = [nd.attrib["ref"] for nd in way.iter("nd")]
        if any(r not in nodes for r in refs):
            missing.append(way_id)
            continue
        if way_id in seen:
            raise InputError(f"duplicate way id {way_id}")
        seen.add(way_id)
        coords = as_polyline(nodes[r] for r in refs)
        if len(coords) < 2:
            log.warn("degenerate_way_dropped", source_id=way_id)
            continue
        features.append(RawFeature(way_id, coords, tags))
    if missing:
        raise InputError("ways reference missing nodes: " + ", ".join(missing))
    return features


def _tag_value(v: Any) -> str | None:
    if v is None:
        return None
    if isinstance(v, bool):
        return "yes" if v else "no"
    return str(v)


def parse_geojson(data: bytes | IO[bytes], attribute_map: Mapping[str, str] | None,
                  ruleset: ClassificationRuleset,
                  defaults: Mapping[str, Any] | None = None,
                  id_property: str | None = None,
                  log: RunLog | None = None) -> list[RawFeature]:
    """Read a FeatureCollection of (Multi)LineStrings.

    ``attribute_map`` maps target tag keys to property names; when it is
    ``None`` all properties are copied verbatim. A mapped property that is
    absent (or null) falls back to ``defaults`` and is an error otherwise.
    MultiLineString features become one feature per part with ids
    ``"<id>#<k>"``.
    """
    log = log or RunLog()
    defaults = defaults or {}
    try:
        doc = json.loads(_read_bytes(data))
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid GeoJSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise InputError("GeoJSON input must be a FeatureCollection")

    features: list[RawFeature] = []
    seen: set[str] = set()
    for i, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        if id_property and props.get(id_property) is not None:
            fid = str(props[id_property])
        elif feat.get("id") is not None:
            fid = str(feat["id"])
        else:
            fid = str(i)
        if fid in seen:
            raise InputError(f"duplicate feature id {fid!r}")
        seen.add(fid)

        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "LineString":
            parts = [geom.get("coordinates", [])]
        elif gtype == "MultiLineString":
            parts = geom.get("coordinates", [])
        else:
            raise InputError(f"feature {fid!r} has unsupported geometry type {gtype!r}")

        if attribute_map is None:
            tags = {k: s for k, v in props.items() if (s := _tag_value(v)) is not None}
        else:
            tags = {}
            for target, prop in attribute_map.items():
                value = _tag_value(props.get(prop))
                if value is None:
                    if target not in defaults:
                        raise InputError(f"feature {fid!r} lacks mapped property {prop!r}")
                    value = _tag_value(defaults[target])
                    if value is None:
                        continue
                tags[target] = value
        if not ruleset.includes(tags):
            continue

        for k, part in enumerate(parts):
            sid = f"{fid}#{k}" if gtype == "MultiLineString" else fid
            coords = as_polyline(c[:2] for c in part)
            if len(coords) < 2:
                log.warn("degenerate_feature_dropped", source_id=sid)
                continue
            features.append(RawFeature(sid, coords, dict(tags)))
    return features


def classify(features: Iterable[RawFeature], ruleset: ClassificationRuleset) -> list[EdgeRecord]:
    """Assign classification attributes; edge ids follow input order."""
    edges = []
    for i, f in enumerate(features):
        mapping = _first_match(ruleset.mapping_method_rules, f.tags)
        both = mapping == "centerline" and any(
            conjunction_matches(c, f.tags) for c in ruleset.centerline_both_sides)
        edges.append(EdgeRecord(
            edge_id=i,
            source_id=f.source_id,
            geometry=f.geometry,
            protection=_first_match(ruleset.protection_rules, f.tags),
            bidirectional=_first_match(ruleset.direction_rules, f.tags),
            mapping_method=mapping,
            grade_separated=any(p.matches(f.tags) for p in ruleset.bridge_tunnel_predicates),
            both_sides=both,
            tags=dict(f.tags),
        ))
    return edges


def _line_parts(geom: shapely.Geometry) -> list[LineString]:
    if geom.is_empty:
        return []
    if isinstance(geom, LineString):
        return [geom]
    if isinstance(geom, MultiLineString):
        merged = shapely.line_merge(geom)
        return list(merged.geoms) if isinstance(merged, MultiLineString) else [merged]
    if hasattr(geom, "geoms"):
        lines = [g for g in geom.geoms if isinstance(g, (LineString, MultiLineString))]
        return _line_parts(MultiLineString([p for g in lines for p in _line_parts(g)])) if lines else []
    return []


def clip_to_study_area(edges: Sequence[EdgeRecord], area: StudyArea,
                       log: RunLog | None = None) -> list[EdgeRecord]:
    """Intersect edges with the study area; pieces keep the parent source id.

    Edge ids are renumbered in output order.
    """
    log = log or RunLog()
    poly = area.boundary
    shapely.prepare(poly)
    out: list[EdgeRecord] = []
    for e in edges:
        line = LineString(e.geometry)
        if poly.covers(line):
            pieces = [e.geometry]
        else:
            pieces = []
            for part in _line_parts(line.intersection(poly)):
                coords = as_polyline(part.coords)
                if len(coords) < 2 or polyline_length(coords) <= 0.0:
                    log.warn("zero_length_clip_dropped", source_id=e.source_id)
                    continue
                pieces.append(coords)
        for coords in pieces:
            out.append(EdgeRecord(len(out), e.source_id, coords, e.protection, e.bidirectional,
                                  e.mapping_method, e.grade_separated, e.both_sides, dict(e.tags)))
    if not out:
        log.warn("empty_after_clip", input_edges=len(edges))
    return out
