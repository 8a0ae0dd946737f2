"""Minimal self-contained SVG line/scatter plots (no plotting dependency)."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Series", "plot"]

_WIDTH, _HEIGHT = 720, 480
_MARGIN = dict(left=75, right=20, top=40, bottom=55)
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


class Series:
    """One plotted data series: a line, markers, or both."""

    def __init__(self, x, y, label="", color=None, line=True, marker=False):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.x.shape != self.y.shape:
            raise ValueError("series x and y lengths differ")
        self.label = label
        self.color = color
        self.line = line
        self.marker = marker


def _ticks(lo, hi, log):
    if log:
        lo_e, hi_e = math.floor(lo), math.ceil(hi)
        step = max(1, (hi_e - lo_e) // 6)
        return [float(e) for e in range(lo_e, hi_e + 1, step)], True
    span = hi - lo or 1.0
    step = 10.0 ** math.floor(math.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    while start <= hi + 1e-12 * span:
        out.append(start)
        start += step
    return out, False


def _fmt(value, log):
    if log:
        return f"1e{int(value)}"
    if value == 0:
        return "0"
    if abs(value) >= 1e4 or abs(value) < 1e-3:
        return f"{value:.1e}"
    return f"{value:g}"


def plot(path, series, *, title="", xlabel="", ylabel="",
         logx=False, logy=False) -> None:
    """Write an SVG chart of the given series list to ``path``."""
    def tx(v):
        return np.log10(v) if logx else v

    def ty(v):
        return np.log10(v) if logy else v

    xs = np.concatenate([tx(s.x[np.isfinite(tx(s.x))]) for s in series])
    ys = np.concatenate([ty(s.y[np.isfinite(ty(s.y))]) for s in series])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi += 1.0
    if y_hi == y_lo:
        y_hi += 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    plot_w = _WIDTH - _MARGIN["left"] - _MARGIN["right"]
    plot_h = _HEIGHT - _MARGIN["top"] - _MARGIN["bottom"]

    def px(v):
        return _MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * plot_w

    def py(v):
        return _MARGIN["top"] + (y_hi - v) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<rect x="{_MARGIN["left"]}" y="{_MARGIN["top"]}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#333"/>',
    ]
    x_ticks, _ = _ticks(x_lo, x_hi, logx)
    y_ticks, _ = _ticks(y_lo, y_hi, logy)
    for v in x_ticks:
        if not (x_lo <= v <= x_hi):
            continue
        parts.append(f'<line x1="{px(v):.1f}" y1="{py(y_lo):.1f}" '
                     f'x2="{px(v):.1f}" y2="{py(y_lo) + 5:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{px(v):.1f}" y="{py(y_lo) + 20:.1f}" '
                     f'font-size="12" text-anchor="middle">{_fmt(v, logx)}</text>')
    for v in y_ticks:
        if not (y_lo <= v <= y_hi):
            continue
        parts.append(f'<line x1="{px(x_lo) - 5:.1f}" y1="{py(v):.1f}" '
                     f'x2="{px(x_lo):.1f}" y2="{py(v):.1f}" stroke="#333"/>')
        parts.append(f'<text x="{px(x_lo) - 8:.1f}" y="{py(v) + 4:.1f}" '
                     f'font-size="12" text-anchor="end">{_fmt(v, logy)}</text>')
    if title:
        parts.append(f'<text x="{_WIDTH / 2}" y="22" font-size="16" '
                     f'text-anchor="middle">{title}</text>')
    if xlabel:
        parts.append(f'<text x="{_WIDTH / 2}" y="{_HEIGHT - 12}" '
                     f'font-size="13" text-anchor="middle">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="18" y="{_HEIGHT / 2}" font-size="13" '
                     f'text-anchor="middle" '
                     f'transform="rotate(-90 18 {_HEIGHT / 2})">{ylabel}</text>')
    legend_y = _MARGIN["top"] + 14
    for k, s in enumerate(series):
        color = s.color or _COLORS[k % len(_COLORS)]
        fx, fy = tx(s.x), ty(s.y)
        ok = np.isfinite(fx) & np.isfinite(fy)
        pts = [(px(a), py(b)) for a, b in zip(fx[ok], fy[ok])]
        if s.line and len(pts) > 1:
            d = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
            parts.append(f'<polyline points="{d}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        if s.marker:
            for a, b in pts:
                parts.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="2.6" '
                             f'fill="{color}"/>')
        if s.label:
            lx = _MARGIN["left"] + plot_w - 150
            parts.append(f'<line x1="{lx}" y1="{legend_y}" x2="{lx + 22}" '
                         f'y2="{legend_y}" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{lx + 28}" y="{legend_y + 4}" '
                         f'font-size="12">{s.label}</text>')
            legend_y += 17
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
