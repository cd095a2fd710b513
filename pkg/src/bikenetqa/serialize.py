"""Deterministic JSON / GeoJSON / CSV text output.

Floats are always written with six decimals so that reruns produce
byte-identical files.
"""

from __future__ import annotations

import json
import math
from typing import Any, Iterable, Mapping, Sequence

from .geometry import Coord

DECIMALS = 6


def fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = f"{x:.{DECIMALS}f}"
    if s.startswith("-") and float(s) == 0.0:
        s = s[1:]
    return s


def _encode(obj: Any, indent: int | None, level: int) -> str:
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalar
        return _encode(obj.item(), indent, level)
    if indent is None:
        sep, pad, pad_end, colon = ",", "", "", ":"
    else:
        sep = ","
        pad = "\n" + " " * (indent * (level + 1))
        pad_end = "\n" + " " * (indent * level)
        colon = ": "
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k), ensure_ascii=False)}{colon}{_encode(v, indent, level + 1)}"
            for k, v in obj.items()
        ]
        return "{" + sep.join(items) + pad_end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        # coordinate pairs stay on one line
        if indent is not None and all(isinstance(v, (int, float)) for v in obj):
            return "[" + ",".join(_encode(v, None, 0) for v in obj) + "]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[" + sep.join(items) + pad_end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int | None = 2) -> str:
    """Serialize ``obj`` to JSON with fixed float formatting and input key order."""
    return _encode(obj, indent, 0) + "\n"


def feature(geometry: Mapping[str, Any] | None, properties: Mapping[str, Any]) -> dict:
    return {"type": "Feature", "properties": dict(properties), "geometry": geometry}


def feature_collection(features: Iterable[Mapping[str, Any]]) -> dict:
    return {"type": "FeatureCollection", "features": list(features)}


def line_geometry(coords: Sequence[Coord]) -> dict:
    return {"type": "LineString", "coordinates": [[float(x), float(y)] for x, y in coords]}


def point_geometry(point: Coord) -> dict:
    return {"type": "Point", "coordinates": [float(point[0]), float(point[1])]}


def polygon_geometry(ring: Sequence[Coord]) -> dict:
    return {"type": "Polygon", "coordinates": [[[float(x), float(y)] for x, y in ring]]}


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if v is None:
                cells.append("")
            elif isinstance(v, float):
                cells.append(fmt_float(v))
            else:
                text = str(v)
                if any(ch in text for ch in ',"\n'):
                    text = '"' + text.replace('"', '""') + '"'
                cells.append(text)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
