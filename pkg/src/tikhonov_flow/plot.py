"""Dependency-free log-log SVG plots of tracked quantities."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import NothingToPlot

PANEL_W = 360
PANEL_H = 280
MARGIN_L = 64
MARGIN_R = 16
MARGIN_T = 36
MARGIN_B = 48
LEGEND_H = 18
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

LABELS = {
    "dist_minnorm": "||(x,lambda) - (x*,lambda*)||",
    "obj_residual": "|f(x) - f*|",
    "feasibility": "||Ax - b||",
    "pd_gap": "L(x,lambda*) - L(x*,lambda*)",
    "dist_saddle_x": "||x - x_t||",
    "dist_saddle_x_sq": "||x - x_t||^2",
    "dist_saddle_lambda": "||lambda - lambda_t||",
    "reg_gap": "L_t(x,lambda_t) - L_t(x_t,lambda_t)",
    "energy": "E(t)",
    "speed_sq": "||v||^2",
    "lemma32_g": "||theta t^(2q+s)(Ax - b)||",
}


def _fmt(v):
    return format(v, ".9f")


def _series_points(samples, quantity):
    pts = []
    for s in samples:
        v = s.value(quantity) if hasattr(s, "value") else getattr(s, quantity)
        if v is not None and v > 0 and math.isfinite(v):
            pts.append((s.t, v))
    return pts


def _panel(quantity, runs, x0, guides):
    """SVG fragments for one panel; ``runs`` is a list of (label, points)."""
    all_t = [t for _, pts in runs for t, _ in pts]
    all_v = [v for _, pts in runs for _, v in pts]
    lt_lo, lt_hi = math.log10(min(all_t)), math.log10(max(all_t))
    lv_lo, lv_hi = math.log10(min(all_v)), math.log10(max(all_v))
    if lt_hi == lt_lo:
        lt_hi = lt_lo + 1.0
    if lv_hi == lv_lo:
        lv_lo, lv_hi = lv_lo - 0.5, lv_hi + 0.5
    pw = PANEL_W - MARGIN_L - MARGIN_R
    ph = PANEL_H - MARGIN_T - MARGIN_B
    left, top = x0 + MARGIN_L, MARGIN_T

    def X(t):
        return left + (math.log10(t) - lt_lo) / (lt_hi - lt_lo) * pw

    def Y(v):
        return top + (lv_hi - math.log10(v)) / (lv_hi - lv_lo) * ph

    out = [f'<g class="panel" data-quantity="{escape(quantity)}">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>',
           f'<text x="{left + pw / 2}" y="{top - 12}" text-anchor="middle" font-size="12">'
           f'{escape(LABELS.get(quantity, quantity))}</text>']
    for k in range(math.ceil(lt_lo), math.floor(lt_hi) + 1):
        xx = X(10.0 ** k)
        out.append(f'<line x1="{_fmt(xx)}" y1="{top + ph}" x2="{_fmt(xx)}" y2="{top + ph + 4}" stroke="#000"/>')
        out.append(f'<text x="{_fmt(xx)}" y="{top + ph + 16}" text-anchor="middle" font-size="10">1e{k}</text>')
    for k in range(math.ceil(lv_lo), math.floor(lv_hi) + 1):
        yy = Y(10.0 ** k)
        out.append(f'<line x1="{left - 4}" y1="{_fmt(yy)}" x2="{left}" y2="{_fmt(yy)}" stroke="#000"/>')
        out.append(f'<text x="{left - 6}" y="{_fmt(yy + 3)}" text-anchor="end" font-size="10">1e{k}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{top + ph + 34}" text-anchor="middle" font-size="11">t</text>')
    for i, (label, pts) in enumerate(runs):
        coords = " ".join(f"{_fmt(X(t))},{_fmt(Y(v))}" for t, v in pts)
        color = COLORS[i % len(COLORS)]
        out.append(f'<polyline class="series" data-label="{escape(label)}" fill="none" '
                   f'stroke="{color}" stroke-width="1.2" points="{coords}"/>')
        out.append(f'<text x="{left + 6}" y="{top + 14 + i * LEGEND_H * 0.7:.1f}" font-size="10" '
                   f'fill="{color}">{escape(label)}</text>')
    beta = guides.get(quantity)
    if beta is not None and runs and runs[0][1]:
        t_a, v_a = runs[0][1][len(runs[0][1]) // 2]
        t_b = max(all_t)
        v_b = v_a * (t_b / t_a) ** (-beta)
        out.append(f'<line class="guide" x1="{_fmt(X(t_a))}" y1="{_fmt(Y(v_a))}" x2="{_fmt(X(t_b))}" '
                   f'y2="{_fmt(Y(max(v_b, 1e-300)))}" stroke="#555" stroke-dasharray="4 3"/>')
        out.append(f'<text x="{left + pw - 4}" y="{top + ph - 6}" text-anchor="end" font-size="10" '
                   f'fill="#555">guide t^-{beta:.3g}</text>')
    out.append("</g>")
    return out


def emit_plot(samples, quantities, path, predicted=None, title=None):
    """Write a log-log SVG with one panel per quantity.

    ``samples`` is a list of samples (one run) or a mapping label -> samples
    (several runs drawn in every panel). ``predicted`` maps quantity ->
    decay exponent for dashed slope guides.
    """
    if not quantities:
        raise NothingToPlot("no quantities selected")
    runs_in = samples if isinstance(samples, dict) else {"run": samples}
    panels = []
    for qty in quantities:
        runs = [(label, _series_points(s, qty)) for label, s in runs_in.items()]
        runs = [(label, pts) for label, pts in runs if len(pts) >= 2]
        if not runs:
            raise NothingToPlot(f"no positive values of {qty} to plot")
        panels.append((qty, runs))
    width = PANEL_W * len(panels)
    height = PANEL_H + (20 if title else 0)
    body = []
    for i, (qty, runs) in enumerate(panels):
        body += _panel(qty, runs, i * PANEL_W, predicted or {})
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
            '<rect width="100%" height="100%" fill="#fff"/>']
    if title:
        head.append(f'<text x="{width / 2}" y="{height - 6}" text-anchor="middle" font-size="12">'
                    f'{escape(title)}</text>')
    text = "\n".join(head + body + ["</svg>"]) + "\n"
    Path(path).write_text(text)
    return Path(path)


def polyline_points(svg_text):
    """Parse polyline coordinates back out of an emitted SVG (for checks)."""
    import re

    out = []
    for m in re.finditer(r'<polyline[^>]*points="([^"]*)"', svg_text):
        pts = [tuple(float(c) for c in pair.split(",")) for pair in m.group(1).split()]
        out.append(np.array(pts))
    return out
