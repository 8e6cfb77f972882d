"""Minimal SVG line plots (no plotting dependency).

One figure holds one or more stacked panels; each panel draws polylines of
``(x, y)`` series with tick labels at the data extremes.
"""
import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _fmt(v):
    return f"{v:.4g}"


def _finite_range(arrays):
    vals = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        lo, hi = lo - pad, hi + pad
    return lo, hi


def _panel(x, series, title, top, width, height, margin):
    left, right = margin, width - 20
    bottom = top + height
    x = np.asarray(x, dtype=float)
    x0, x1 = _finite_range([x])
    y0, y1 = _finite_range([y for _, y in series])

    def px(v):
        return left + (v - x0) / (x1 - x0) * (right - left)

    def py(v):
        return bottom - (v - y0) / (y1 - y0) * height

    out = [
        f'<rect x="{left}" y="{top}" width="{right - left}" height="{height}" '
        'fill="none" stroke="#888" stroke-width="1"/>',
        f'<text x="{left}" y="{top - 6}" font-size="13">{escape(title)}</text>',
        f'<text x="{left - 4}" y="{top + 10}" font-size="10" text-anchor="end">{_fmt(y1)}</text>',
        f'<text x="{left - 4}" y="{bottom}" font-size="10" text-anchor="end">{_fmt(y0)}</text>',
        f'<text x="{left}" y="{bottom + 14}" font-size="10">{_fmt(x0)}</text>',
        f'<text x="{right}" y="{bottom + 14}" font-size="10" text-anchor="end">{_fmt(x1)}</text>',
    ]
    for i, (label, y) in enumerate(series):
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], y[ok]))
        color = PALETTE[i % len(PALETTE)]
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(
            f'<text x="{right - 4}" y="{top + 14 + 13 * i}" font-size="11" text-anchor="end" '
            f'fill="{color}">{escape(label)}</text>'
        )
    return out


def line_plot(path, x, panels, xlabel="t", width=640, panel_height=160):
    """Write stacked line panels sharing the abscissa ``x``.

    Parameters
    ----------
    path : str
        Output file.
    x : array_like
        Shared abscissa.
    panels : list of (title, list of (label, y))
        One entry per panel.
    """
    margin = 70
    gap = 40
    height = len(panels) * (panel_height + gap) + 30
    body = []
    for i, (title, series) in enumerate(panels):
        top = 25 + i * (panel_height + gap)
        body += _panel(x, series, title, top, width, panel_height, margin)
    body.append(
        f'<text x="{width / 2}" y="{height - 6}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>'
    )
    doc = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{math.ceil(height)}" '
        f'viewBox="0 0 {width} {math.ceil(height)}">\n'
        '<rect width="100%" height="100%" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n"
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(doc)
    return path
