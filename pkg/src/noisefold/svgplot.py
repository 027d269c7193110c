"""Minimal dependency-free SVG line plots.

Polyline plots with axes, tick labels and a legend; enough for offline
inspection of coefficient and coherence traces, nothing interactive.
"""

from __future__ import annotations

import math

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f")


def _nice_ticks(lo: float, hi: float, target: int = 6):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0, 1.0]
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    span = hi - lo
    raw = span / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks or [lo, hi]


def _fmt(x: float) -> str:
    if x == 0:
        return "0"
    if abs(x) >= 1e4 or abs(x) < 1e-3:
        return f"{x:.2e}"
    return f"{x:.4g}"


def line_plot(path: str, x, series, title: str = "", xlabel: str = "",
              ylabel: str = "", width: int = 720, height: int = 460):
    """Write a polyline plot; `series` is a list of (label, y-array) pairs."""
    x = [float(v) for v in x]
    ys = [(label, [float(v) for v in y]) for label, y in series]
    margin_l, margin_r, margin_t, margin_b = 72, 20, 36, 52
    pw = width - margin_l - margin_r
    ph = height - margin_t - margin_b

    x_lo, x_hi = min(x), max(x)
    all_y = [v for _, y in ys for v in y] or [0.0, 1.0]
    y_lo, y_hi = min(all_y), max(all_y)
    if y_hi == y_lo:
        y_hi = y_lo + (abs(y_lo) if y_lo else 1.0)
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    def px(v):
        return margin_l + pw * (v - x_lo) / (x_hi - x_lo)

    def py(v):
        return margin_t + ph * (1.0 - (v - y_lo) / (y_hi - y_lo))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           '<g font-family="sans-serif" font-size="12" fill="#222">']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
                   f'font-size="14">{title}</text>')

    for t in _nice_ticks(x_lo, x_hi):
        if x_lo <= t <= x_hi:
            xp = px(t)
            out.append(f'<line x1="{xp:.1f}" y1="{margin_t + ph}" x2="{xp:.1f}" '
                       f'y2="{margin_t + ph + 4}" stroke="#222"/>')
            out.append(f'<text x="{xp:.1f}" y="{margin_t + ph + 18}" '
                       f'text-anchor="middle">{_fmt(t)}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        if y_lo <= t <= y_hi:
            yp = py(t)
            out.append(f'<line x1="{margin_l - 4}" y1="{yp:.1f}" x2="{margin_l}" '
                       f'y2="{yp:.1f}" stroke="#222"/>')
            out.append(f'<text x="{margin_l - 8}" y="{yp + 4:.1f}" '
                       f'text-anchor="end">{_fmt(t)}</text>')
            out.append(f'<line x1="{margin_l}" y1="{yp:.1f}" '
                       f'x2="{margin_l + pw}" y2="{yp:.1f}" stroke="#eee"/>')

    out.append(f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" '
               f'y2="{margin_t + ph}" stroke="#222"/>')
    out.append(f'<line x1="{margin_l}" y1="{margin_t + ph}" '
               f'x2="{margin_l + pw}" y2="{margin_t + ph}" stroke="#222"/>')
    if xlabel:
        out.append(f'<text x="{margin_l + pw / 2:.1f}" y="{height - 14}" '
                   f'text-anchor="middle">{xlabel}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{margin_t + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {margin_t + ph / 2:.1f})">{ylabel}</text>')

    for idx, (label, y) in enumerate(ys):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        ly = margin_t + 14 + 16 * idx
        lx = margin_l + pw - 150
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}">{label}</text>')

    out.append("</g></svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out))
