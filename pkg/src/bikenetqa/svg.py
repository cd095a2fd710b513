"""Static SVG maps and Zipf plots.

Output is plain SVG 1.1 text built from format strings, with coordinates
rounded to two decimals so identical inputs give identical documents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from html import escape
from typing import Mapping, Sequence

from .geometry import Coord
from .grid import AnalysisGrid

WIDTH, HEIGHT = 900, 700
MAP_SIZE = 640
MARGIN = 30
LEGEND_X = MAP_SIZE + 2 * MARGIN

# ColorBrewer YlGnBu (5) and RdYlBu (5); lowest class first
SEQUENTIAL_RAMP = ("#ffffcc", "#a1dab4", "#41b6c4", "#2c7fb8", "#253494")
DIVERGING_RAMP = ("#d7191c", "#fdae61", "#ffffbf", "#abd9e9", "#2c7bb6")
NO_DATA = "#eeeeee"
LINE_COLORS = ("#1f4e9c", "#d62728", "#2ca02c", "#ff7f0e", "#7f7f7f")


@dataclass
class GridLayer:
    grid: AnalysisGrid
    values: Mapping[int, float]
    label: str
    diverging: bool = False
    classes: int = 5


@dataclass
class LineLayer:
    lines: Sequence[Sequence[Coord]]
    label: str
    color: str = LINE_COLORS[0]
    width: float = 1.2
    dash: str | None = None


@dataclass
class PointLayer:
    points: Sequence[Coord]
    label: str
    color: str = LINE_COLORS[1]
    radius: float = 3.0


Layer = GridLayer | LineLayer | PointLayer


def _n(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def class_breaks(values: Sequence[float], classes: int, diverging: bool) -> list[float]:
    """Equal-interval upper bounds; sequential ramps start at zero, diverging
    ramps are symmetric around zero."""
    if diverging:
        m = max((abs(v) for v in values), default=0.0) or 1.0
        return [-m + 2 * m * (k + 1) / classes for k in range(classes)]
    hi = max(values, default=0.0)
    lo = min(0.0, min(values, default=0.0))
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * (k + 1) / classes for k in range(classes)]


def classify_value(v: float, breaks: Sequence[float]) -> int:
    for k, b in enumerate(breaks):
        if v <= b:
            return k
    return len(breaks) - 1


def _fmt_break(x: float) -> str:
    return f"{x:,.1f}" if abs(x) < 1000 else f"{x:,.0f}"


def _nice_length(target: float) -> float:
    if target <= 0:
        return 1.0
    exp = 10 ** math.floor(math.log10(target))
    for m in (5, 2, 1):
        if m * exp <= target:
            return m * exp
    return exp


def _bounds(layers: Sequence[Layer]) -> tuple[float, float, float, float]:
    xs: list[float] = []
    ys: list[float] = []
    for layer in layers:
        if isinstance(layer, GridLayer):
            for c in layer.grid.cells.values():
                xs += [c.bounds[0], c.bounds[2]]
                ys += [c.bounds[1], c.bounds[3]]
        elif isinstance(layer, LineLayer):
            for line in layer.lines:
                xs += [p[0] for p in line]
                ys += [p[1] for p in line]
        else:
            xs += [p[0] for p in layer.points]
            ys += [p[1] for p in layer.points]
    if not xs:
        return (0.0, 0.0, 1.0, 1.0)
    return (min(xs), min(ys), max(xs), max(ys))


def render_svg_map(layers: Sequence[Layer], title: str = "") -> str:
    """Draw layers bottom to top with a legend and a metric scale bar."""
    if not layers:
        raise ValueError("render_svg_map needs at least one layer")
    minx, miny, maxx, maxy = _bounds(layers)
    span = max(maxx - minx, maxy - miny) or 1.0
    scale = MAP_SIZE / span

    def tx(x: float) -> str:
        return _n(MARGIN + (x - minx) * scale)

    def ty(y: float) -> str:
        return _n(MARGIN + MAP_SIZE - (y - miny) * scale)

    body: list[str] = []
    legend: list[str] = []
    ly = MARGIN + 20
    for layer in layers:
        if isinstance(layer, GridLayer):
            ramp = DIVERGING_RAMP if layer.diverging else SEQUENTIAL_RAMP
            vals = [layer.values[c] for c in layer.grid.cells if c in layer.values]
            breaks = class_breaks(vals, layer.classes, layer.diverging)
            lower = breaks[0] - (breaks[1] - breaks[0]) if len(breaks) > 1 else 0.0
            for cid, cell in layer.grid.cells.items():
                fill = NO_DATA if cid not in layer.values else ramp[classify_value(layer.values[cid], breaks)]
                x0, y0, x1, y1 = cell.bounds
                body.append(f'<rect x="{tx(x0)}" y="{ty(y1)}" width="{_n((x1 - x0) * scale)}" '
                            f'height="{_n((y1 - y0) * scale)}" fill="{fill}" stroke="#ffffff" '
                            f'stroke-width="0.5"/>')
            legend.append(f'<text x="{LEGEND_X}" y="{ly}" font-weight="bold">{escape(layer.label)}</text>')
            ly += 18
            for k, b in enumerate(breaks):
                lo = lower if k == 0 else breaks[k - 1]
                legend.append(f'<rect x="{LEGEND_X}" y="{ly - 11}" width="14" height="14" fill="{ramp[k]}" '
                              f'stroke="#555555" stroke-width="0.5"/>')
                legend.append(f'<text x="{LEGEND_X + 20}" y="{ly}">{_fmt_break(lo)} – {_fmt_break(b)}</text>')
                ly += 18
            legend.append(f'<rect x="{LEGEND_X}" y="{ly - 11}" width="14" height="14" fill="{NO_DATA}" '
                          f'stroke="#555555" stroke-width="0.5"/>')
            legend.append(f'<text x="{LEGEND_X + 20}" y="{ly}">no data</text>')
            ly += 26
        elif isinstance(layer, LineLayer):
            dash = f' stroke-dasharray="{layer.dash}"' if layer.dash else ""
            for line in layer.lines:
                pts = " ".join(f"{tx(x)},{ty(y)}" for x, y in line)
                body.append(f'<polyline points="{pts}" fill="none" stroke="{layer.color}" '
                            f'stroke-width="{_n(layer.width)}"{dash}/>')
            legend.append(f'<line x1="{LEGEND_X}" y1="{ly - 4}" x2="{LEGEND_X + 24}" y2="{ly - 4}" '
                          f'stroke="{layer.color}" stroke-width="{_n(max(layer.width, 2))}"{dash}/>')
            legend.append(f'<text x="{LEGEND_X + 30}" y="{ly}">{escape(layer.label)} ({len(layer.lines)})</text>')
            ly += 22
        else:
            for x, y in layer.points:
                body.append(f'<circle cx="{tx(x)}" cy="{ty(y)}" r="{_n(layer.radius)}" fill="{layer.color}" '
                            f'fill-opacity="0.8"/>')
            legend.append(f'<circle cx="{LEGEND_X + 12}" cy="{ly - 4}" r="{_n(layer.radius)}" '
                          f'fill="{layer.color}"/>')
            legend.append(f'<text x="{LEGEND_X + 30}" y="{ly}">{escape(layer.label)} ({len(layer.points)})</text>')
            ly += 22

    bar_m = _nice_length(span / 4)
    bar_px = bar_m * scale
    bar_label = f"{_n(bar_m / 1000)} km" if bar_m >= 1000 else f"{_n(bar_m)} m"
    by = HEIGHT - 20
    scalebar = [
        f'<line x1="{MARGIN}" y1="{by}" x2="{_n(MARGIN + bar_px)}" y2="{by}" stroke="#000000" stroke-width="2"/>',
        f'<line x1="{MARGIN}" y1="{by - 5}" x2="{MARGIN}" y2="{by}" stroke="#000000"/>',
        f'<line x1="{_n(MARGIN + bar_px)}" y1="{by - 5}" x2="{_n(MARGIN + bar_px)}" y2="{by}" stroke="#000000"/>',
        f'<text x="{_n(MARGIN + bar_px + 6)}" y="{by + 4}">{bar_label}</text>',
    ]
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">')
    title_el = f'<text x="{MARGIN}" y="18" font-size="14" font-weight="bold">{escape(title)}</text>'
    parts = [head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>', title_el,
             '<g class="map">', *body, "</g>", '<g class="legend">', *legend, "</g>",
             '<g class="scalebar">', *scalebar, "</g>", "</svg>"]
    return "\n".join(parts) + "\n"


ZIPF_MARKERS = (("circle", LINE_COLORS[0]), ("square", LINE_COLORS[1]))


def render_zipf_svg(series: Sequence[tuple[int, float]],
                    second: Sequence[tuple[int, float]] | None = None,
                    labels: tuple[str, str] = ("network", "other"), title: str = "") -> str:
    """Log-log scatter of component length against rank."""
    if not series:
        raise ValueError("empty Zipf series")
    all_series = [series] + ([second] if second else [])
    ranks = [r for s in all_series for r, _ in s]
    lengths = [v for s in all_series for _, v in s if v > 0] or [1.0]
    x_hi = math.ceil(math.log10(max(max(ranks), 10)))
    y_lo = math.floor(math.log10(min(lengths)))
    y_hi = math.ceil(math.log10(max(lengths)))
    if y_hi == y_lo:
        y_hi += 1
    left, top, w, h = 80, 40, WIDTH - 260, HEIGHT - 110

    def px(rank: float) -> float:
        return left + math.log10(rank) / x_hi * w

    def py(length: float) -> float:
        return top + h - (math.log10(max(length, 10.0**y_lo)) - y_lo) / (y_hi - y_lo) * h

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
           f'<text x="{left}" y="24" font-size="14" font-weight="bold">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="#000000"/>']
    for k in range(0, x_hi + 1):
        x = _n(px(10.0**k))
        out.append(f'<line x1="{x}" y1="{top + h}" x2="{x}" y2="{top + h + 5}" stroke="#000000"/>')
        out.append(f'<text x="{x}" y="{top + h + 18}" text-anchor="middle">10^{k}</text>')
    for k in range(y_lo, y_hi + 1):
        y = _n(py(10.0**k))
        out.append(f'<line x1="{left - 5}" y1="{y}" x2="{left}" y2="{y}" stroke="#000000"/>')
        out.append(f'<text x="{left - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">10^{k}</text>')
    out.append(f'<text x="{left + w / 2}" y="{HEIGHT - 30}" text-anchor="middle">component rank (log)</text>')
    out.append(f'<text x="20" y="{top + h / 2}" text-anchor="middle" '
               f'transform="rotate(-90 20 {top + h / 2})">component length, m (log)</text>')
    for idx, s in enumerate(all_series):
        shape, color = ZIPF_MARKERS[idx]
        for rank, length in s:
            x, y = px(rank), py(length)
            if shape == "circle":
                out.append(f'<circle class="marker" cx="{_n(x)}" cy="{_n(y)}" r="4" fill="{color}"/>')
            else:
                out.append(f'<rect class="marker" x="{_n(x - 4)}" y="{_n(y - 4)}" width="8" height="8" '
                           f'fill="{color}"/>')
        lx, ly = left + w + 20, top + 20 + 22 * idx
        if shape == "circle":
            out.append(f'<circle cx="{lx + 6}" cy="{ly - 4}" r="4" fill="{color}"/>')
        else:
            out.append(f'<rect x="{lx + 2}" y="{ly - 8}" width="8" height="8" fill="{color}"/>')
        out.append(f'<text x="{lx + 18}" y="{ly}">{escape(labels[idx])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
