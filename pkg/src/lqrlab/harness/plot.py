"""Dependency-free SVG line plots on log-log axes."""

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=72, right=150, top=36, bottom=52)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _log_bounds(values):
    v = np.asarray([x for x in values if np.isfinite(x) and x > 0], dtype=float)
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = math.floor(math.log10(v.min())), math.ceil(math.log10(v.max()))
    if hi == lo:
        hi = lo + 1
    return float(lo), float(hi)


def _fmt_tick(e):
    return f"1e{int(e)}"


def render_svg(series, x_label="iteration", y_label="value", title=""):
    """``series``: list of dicts with label, x, mean and optional lo / hi arrays.

    Non-positive or non-finite points are dropped (log axes). A series with a
    single usable point is drawn as a marker.
    """
    cleaned = []
    xs_all, ys_all = [], []
    for s in series:
        x = np.asarray(s["x"], dtype=float)
        y = np.asarray(s["mean"], dtype=float)
        keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
        lo = s.get("lo")
        hi = s.get("hi")
        band = None
        if lo is not None and hi is not None:
            lo = np.asarray(lo, dtype=float)[keep]
            hi = np.asarray(hi, dtype=float)[keep]
            ok = np.isfinite(lo) & np.isfinite(hi)
            if np.any(ok):
                # log axes cannot show a band crossing zero; clip to the mean's decade floor
                floor = np.min(y[keep]) / 10.0 if np.any(keep) else 1e-300
                band = (np.where(ok, np.maximum(lo, floor), y[keep]), np.where(ok, hi, y[keep]))
                ys_all.extend(band[0][ok])
                ys_all.extend(band[1][ok])
        cleaned.append((s.get("label", ""), x[keep], y[keep], band))
        xs_all.extend(x[keep])
        ys_all.extend(y[keep])

    x0, x1 = _log_bounds(xs_all)
    y0, y1 = _log_bounds(ys_all)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (math.log10(x) - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (y1 - math.log10(y)) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#444"/>',
    ]
    for e in range(int(x0), int(x1) + 1):
        X = px(10.0**e)
        out.append(f'<line x1="{X:.2f}" y1="{MARGIN["top"]}" x2="{X:.2f}" y2="{MARGIN["top"] + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{X:.2f}" y="{MARGIN["top"] + ph + 16}" text-anchor="middle">{_fmt_tick(e)}</text>')
    for e in range(int(y0), int(y1) + 1):
        Y = py(10.0**e)
        out.append(f'<line x1="{MARGIN["left"]}" y1="{Y:.2f}" x2="{MARGIN["left"] + pw}" y2="{Y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{Y + 4:.2f}" text-anchor="end">{_fmt_tick(e)}</text>')
    out.append(
        f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(x_label)}</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(y_label)}</text>'
    )
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')

    for i, (label, x, y, band) in enumerate(cleaned):
        color = PALETTE[i % len(PALETTE)]
        if band is not None and x.size > 1:
            upper = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, band[1]))
            lower = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[::-1], band[0][::-1]))
            out.append(f'<polygon class="band" points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        if x.size == 1:
            out.append(f'<circle class="marker" cx="{px(x[0]):.2f}" cy="{py(y[0]):.2f}" r="4" fill="{color}"/>')
        elif x.size > 1:
            d = "M " + " L ".join(f"{px(a):.2f} {py(b):.2f}" for a, b in zip(x, y))
            out.append(f'<path class="mean" d="{d}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        ly = MARGIN["top"] + 14 + 18 * i
        lx = MARGIN["left"] + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg_plot(aggregate, metric, path, x="iteration", label=None, title=""):
    """Plot one metric of an :class:`AggregateSeries` (mean line plus 95% band)."""
    if aggregate is None or len(aggregate) == 0:
        raise ValueError("aggregate is empty")
    if metric not in aggregate.mean:
        raise KeyError(metric)
    xs = aggregate.iters + 1 if x == "iteration" else aggregate.mean["samples"]
    series = [{
        "label": label or metric,
        "x": xs,
        "mean": aggregate.mean[metric],
        "lo": aggregate.lo[metric],
        "hi": aggregate.hi[metric],
    }]
    return write_svg(render_svg(series, x, metric, title), path)


def write_svg(text, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path
