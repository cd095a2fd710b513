"""Small planar polyline helpers shared by the analysis modules.

Polylines are sequences of ``(x, y)`` tuples in projected meters.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

Coord = tuple[float, float]
Polyline = tuple[Coord, ...]


def as_polyline(coords: Iterable[Sequence[float]]) -> Polyline:
    """Convert to a tuple of float pairs, dropping consecutive duplicates."""
    out: list[Coord] = []
    for c in coords:
        p = (float(c[0]), float(c[1]))
        if not out or out[-1] != p:
            out.append(p)
    return tuple(out)


def polyline_length(coords: Sequence[Coord]) -> float:
    arr = np.asarray(coords, dtype=float)
    if len(arr) < 2:
        return 0.0
    d = np.diff(arr, axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def reverse(coords: Sequence[Coord]) -> Polyline:
    return tuple(coords[::-1])


def point_to_segments(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Distance matrix (N points x M segments) from points to closed segments."""
    p = points[:, None, :]
    a = starts[None, :, :]
    ab = (ends - starts)[None, :, :]
    denom = (ab**2).sum(axis=2)
    # zero-length segments degrade to point distance
    safe = np.where(denom > 0, denom, 1.0)
    t = np.clip(((p - a) * ab).sum(axis=2) / safe, 0.0, 1.0)
    t = np.where(denom > 0, t, 0.0)
    closest = a + t[..., None] * ab
    return np.hypot(*(p - closest).transpose(2, 0, 1))


def point_polyline_distance(point: Coord, coords: Sequence[Coord]) -> float:
    arr = np.asarray(coords, dtype=float)
    d = point_to_segments(np.asarray([point], dtype=float), arr[:-1], arr[1:])
    return float(d.min())


def densify(coords: Sequence[Coord], spacing: float) -> np.ndarray:
    """Return the polyline vertices plus evenly spaced interior points.

    Every polyline segment is subdivided into ``ceil(len / spacing)`` equal
    pieces, so consecutive points are never farther apart than ``spacing``.
    """
    arr = np.asarray(coords, dtype=float)
    chunks = []
    for a, b in zip(arr[:-1], arr[1:]):
        n = max(1, math.ceil(math.hypot(*(b - a)) / spacing))
        t = np.arange(n)[:, None] / n
        chunks.append(a + t * (b - a))
    chunks.append(arr[-1:])
    return np.concatenate(chunks)


def split_at_distances(coords: Sequence[Coord], cuts: Sequence[float]) -> list[Polyline]:
    """Cut a polyline at the given arc-length positions (strictly increasing,
    strictly inside ``(0, length)``) and return the pieces in order."""
    pieces: list[Polyline] = []
    current: list[Coord] = [tuple(coords[0])]
    walked = 0.0
    cut_iter = iter(cuts)
    nxt = next(cut_iter, None)
    for a, b in zip(coords[:-1], coords[1:]):
        seg = math.hypot(b[0] - a[0], b[1] - a[1])
        while nxt is not None and nxt < walked + seg:
            t = (nxt - walked) / seg
            p = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
            if p != current[-1]:
                current.append(p)
            pieces.append(tuple(current))
            current = [p]
            nxt = next(cut_iter, None)
        if tuple(b) != current[-1]:
            current.append(tuple(b))
        walked += seg
    if len(current) >= 2:
        pieces.append(tuple(current))
    return pieces


def chord_angle(a: Sequence[Coord], b: Sequence[Coord]) -> float:
    """Acute angle in degrees between the first-to-last chords of two polylines."""
    va = (a[-1][0] - a[0][0], a[-1][1] - a[0][1])
    vb = (b[-1][0] - b[0][0], b[-1][1] - b[0][1])
    na, nb = math.hypot(*va), math.hypot(*vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("degenerate segment: zero-length chord")
    cross = va[0] * vb[1] - va[1] * vb[0]
    dot = va[0] * vb[0] + va[1] * vb[1]
    angle = abs(math.degrees(math.atan2(cross, dot)))
    if angle > 90.0:
        angle = 180.0 - angle
    return angle
