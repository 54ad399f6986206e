"""Dependency-free SVG line plots with an optional shaded interval band."""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from gridfuse.errors import InvalidArgument

WIDTH, HEIGHT = 720, 360
MARGIN = dict(left=70, right=150, top=30, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
BAND_FILL = "#1f77b4"


def _fmt(x: float) -> str:
    # fixed precision keeps output byte-stable across platforms
    return f"{x:.2f}"


def _label(x: float) -> str:
    return f"{x:.4g}"


def _as_series(series) -> list[tuple[str, np.ndarray, np.ndarray]]:
    items = series.items() if isinstance(series, Mapping) else series
    out = []
    for name, data in items:
        t, v = data
        t = np.asarray(t, dtype=float).ravel()
        v = np.asarray(v, dtype=float).ravel()
        if t.size == 0 or t.size != v.size:
            raise InvalidArgument(f"series {name!r}: need equal, nonzero numbers of times and values")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise InvalidArgument(f"series {name!r}: non-finite samples")
        out.append((str(name), t, v))
    if not out:
        raise InvalidArgument("emit_svg_plot needs at least one series")
    return out


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    return np.linspace(lo, hi, n)


def emit_svg_plot(
    series: Mapping[str, tuple[Sequence[float], Sequence[float]]] | Sequence,
    band: tuple | None = None,
    title: str = "",
    xlabel: str = "time (s)",
    ylabel: str = "value",
) -> str:
    """Render named ``(times, values)`` series as SVG text.

    ``band`` is ``(lower, upper)`` aligned with the first series' times, or
    ``(times, lower, upper)``. It is drawn as one filled path under the lines.
    Identical inputs give byte-identical output.
    """
    lines = _as_series(series)
    band_pts = None
    if band is not None:
        if len(band) == 2:
            bt, (lo, hi) = lines[0][1], band
        elif len(band) == 3:
            bt, lo, hi = band
        else:
            raise InvalidArgument("band must be (lower, upper) or (times, lower, upper)")
        bt, lo, hi = (np.asarray(a, dtype=float).ravel() for a in (bt, lo, hi))
        if not bt.size == lo.size == hi.size or bt.size == 0:
            raise InvalidArgument("band arrays must be nonempty and aligned with the band times")
        if np.any(lo > hi):
            raise InvalidArgument("band lower bound exceeds upper bound")
        band_pts = (bt, lo, hi)

    all_t = np.concatenate([t for _, t, _ in lines] + ([band_pts[0]] if band_pts else []))
    all_v = np.concatenate([v for _, _, v in lines] + (list(band_pts[1:]) if band_pts else []))
    x0, x1 = float(all_t.min()), float(all_t.max())
    y0, y1 = float(all_v.min()), float(all_v.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        pad = abs(y0) * 0.05 or 0.5
        y0, y1 = y0 - pad, y1 + pad

    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(t):
        return left + (np.asarray(t) - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (np.asarray(v) - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">'
                   f'{escape(title)}</text>')

    if band_pts is not None:
        bt, lo, hi = band_pts
        upper = " L ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px(bt), py(hi)))
        lower = " L ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px(bt[::-1]), py(lo[::-1])))
        out.append(f'<path class="band" d="M {upper} L {lower} Z" fill="{BAND_FILL}" '
                   f'fill-opacity="0.2" stroke="none"/>')

    # axes
    out.append(f'<g class="axes" stroke="black" stroke-width="1">'
               f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}"/>'
               f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}"/></g>')
    ticks = ['<g class="ticks">']
    for t in _ticks(x0, x1):
        x = _fmt(float(px(t)))
        ticks.append(f'<line x1="{x}" y1="{top + ph}" x2="{x}" y2="{top + ph + 4}" stroke="black"/>'
                     f'<text x="{x}" y="{top + ph + 16}" text-anchor="middle">{_label(t)}</text>')
    for v in _ticks(y0, y1):
        y = _fmt(float(py(v)))
        ticks.append(f'<line x1="{left - 4}" y1="{y}" x2="{left}" y2="{y}" stroke="black"/>'
                     f'<text x="{left - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">'
                     f'{_label(v)}</text>')
    ticks.append("</g>")
    out.extend(ticks)
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')

    legend = ['<g class="legend">']
    for k, (name, t, v) in enumerate(lines):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px(t), py(v)))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 14 * k + 6
        lx = left + pw + 12
        legend.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" '
                      f'stroke-width="2"/><text x="{lx + 24}" y="{ly + 4}">{escape(name)}</text>')
    if band_pts is not None:
        ly = top + 14 * len(lines) + 6
        lx = left + pw + 12
        legend.append(f'<rect x="{lx}" y="{ly - 5}" width="18" height="10" fill="{BAND_FILL}" '
                      f'fill-opacity="0.2"/><text x="{lx + 24}" y="{ly + 4}">interval</text>')
    legend.append("</g>")
    out.extend(legend)
    out.append("</svg>")
    return "\n".join(out) + "\n"
