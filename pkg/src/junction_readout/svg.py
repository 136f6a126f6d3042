"""Tiny deterministic SVG writer for line plots and heat maps."""
from __future__ import annotations

import math

import numpy as np

W, H = 640, 420
M_L, M_R, M_T, M_B = 70, 20, 30, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(x: float) -> str:
    return f"{x:.2f}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _span(v):
    v = np.asarray(v, float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def _frame(title, xlabel, ylabel, xr, yr) -> list:
    pw, ph = W - M_L - M_R, H - M_T - M_B
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<rect x="{M_L}" y="{M_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="14">{_esc(title)}</text>',
           f'<text x="{M_L + pw / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{_esc(xlabel)}</text>',
           f'<text x="15" y="{M_T + ph / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 15 {M_T + ph / 2})">{_esc(ylabel)}</text>']
    for k in range(5):
        fx = xr[0] + (xr[1] - xr[0]) * k / 4
        fy = yr[0] + (yr[1] - yr[0]) * k / 4
        px = M_L + pw * k / 4
        py = M_T + ph * (1 - k / 4)
        out.append(f'<text x="{_f(px)}" y="{H - M_B + 16}" text-anchor="middle" font-size="10">{fx:.4g}</text>')
        out.append(f'<text x="{M_L - 4}" y="{_f(py + 3)}" text-anchor="end" font-size="10">{fy:.4g}</text>')
    return out


def line_plot(path, x, series: dict, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """Write one polyline per entry of ``series``; non-finite points break the line."""
    x = np.asarray(x, float)
    xr = _span(x)
    yr = _span(np.concatenate([np.asarray(v, float) for v in series.values()])) if series else (0, 1)
    pw, ph = W - M_L - M_R, H - M_T - M_B
    out = _frame(title, xlabel, ylabel, xr, yr)
    for i, (label, y) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        seg = []
        runs = []
        for xi, yi in zip(x, np.asarray(y, float)):
            if math.isfinite(xi) and math.isfinite(yi):
                px = M_L + pw * (xi - xr[0]) / (xr[1] - xr[0])
                py = M_T + ph * (1 - (yi - yr[0]) / (yr[1] - yr[0]))
                seg.append(f"{_f(px)},{_f(py)}")
            elif seg:
                runs.append(seg)
                seg = []
        if seg:
            runs.append(seg)
        for r in runs:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(r)}"/>')
        out.append(f'<text x="{W - M_R - 5}" y="{M_T + 14 + 14 * i}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{_esc(str(label))}</text>')
    out.append("</svg>")
    return _write(path, out)


def _gray(v: float) -> str:
    if not math.isfinite(v):
        return "#ffffff"
    c = int(round(255 * (1 - min(max(v, 0.0), 1.0))))
    return f"#{c:02x}{c:02x}ff"


def heatmap(path, grid, x, y, title: str = "", xlabel: str = "", ylabel: str = "",
            vmin: float | None = None, vmax: float | None = None) -> str:
    """Cells of ``grid[i_y, i_x]`` colored on a white-to-blue scale."""
    g = np.asarray(grid, float)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    lo, hi = _span(g)
    lo = lo if vmin is None else vmin
    hi = hi if vmax is None else vmax
    xr, yr = _span(x), _span(y)
    pw, ph = W - M_L - M_R, H - M_T - M_B
    out = _frame(f"{title} [{lo:.4g}, {hi:.4g}]", xlabel, ylabel, xr, yr)
    cw = pw / max(len(x), 1)
    chh = ph / max(len(y), 1)
    for i in range(g.shape[0]):
        for j in range(g.shape[1]):
            v = (g[i, j] - lo) / (hi - lo) if hi > lo else 0.0
            px = M_L + cw * j
            py = M_T + ph - chh * (i + 1)
            out.append(f'<rect x="{_f(px)}" y="{_f(py)}" width="{_f(cw)}" height="{_f(chh)}" fill="{_gray(v)}"/>')
    out.append("</svg>")
    return _write(path, out)


def _write(path, lines) -> str:
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
