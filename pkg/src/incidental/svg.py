"""Minimal SVG charts: line/scatter plots with optional log axes, and heatmaps.

Rendering only reads the data it is given; it never feeds back into results.
"""
from __future__ import annotations

import math
from html import escape
from pathlib import Path

import numpy as np

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

W, H = 640, 420
ML, MR, MT, MB = 70, 150, 40, 55


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // 8)
        return [float(e) for e in range(a, b + 1, step)]
    span = hi - lo or 1.0
    raw = span / 6
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10)), key=lambda s: abs(s - raw))
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v, log):
    if log:
        return f"1e{int(v)}"
    return f"{v:.3g}"


class Chart:
    """Collects series, then renders one SVG document."""

    def __init__(self, title="", xlabel="", ylabel="", logx=False, logy=False):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.logx, self.logy = logx, logy
        self.series = []

    def line(self, x, y, label=None, dashed=False, color=None):
        self.series.append(("line", np.asarray(x, float), np.asarray(y, float), label, dashed, color))
        return self

    def scatter(self, x, y, label=None, color=None):
        self.series.append(("scatter", np.asarray(x, float), np.asarray(y, float), label, False, color))
        return self

    def _transform(self, x, y):
        keep = np.isfinite(x) & np.isfinite(y)
        if self.logx:
            keep &= x > 0
        if self.logy:
            keep &= y > 0
        x, y = x[keep], y[keep]
        return (np.log10(x) if self.logx else x), (np.log10(y) if self.logy else y)

    def render(self) -> str:
        pts = [self._transform(x, y) for _, x, y, *_ in self.series]
        xs = np.concatenate([p[0] for p in pts]) if pts else np.array([0.0, 1.0])
        ys = np.concatenate([p[1] for p in pts]) if pts else np.array([0.0, 1.0])
        if xs.size == 0:
            xs = ys = np.array([0.0, 1.0])
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.04 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad
        pw, ph = W - ML - MR, H - MT - MB

        def px(v):
            return ML + (v - x0) / (x1 - x0) * pw

        def py(v):
            return MT + ph - (v - y0) / (y1 - y0) * ph

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
               f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
               f'<rect width="{W}" height="{H}" fill="white"/>',
               f'<text x="{ML + pw / 2}" y="22" text-anchor="middle" font-size="14">{escape(self.title)}</text>',
               f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
        for v in _ticks(x0, x1, self.logx):
            if x0 <= v <= x1:
                X = px(v)
                out.append(f'<line x1="{X:.2f}" y1="{MT + ph}" x2="{X:.2f}" y2="{MT + ph + 5}" stroke="black"/>')
                out.append(f'<text x="{X:.2f}" y="{MT + ph + 18}" text-anchor="middle">{_fmt(v, self.logx)}</text>')
        for v in _ticks(y0, y1, self.logy):
            if y0 <= v <= y1:
                Y = py(v)
                out.append(f'<line x1="{ML - 5}" y1="{Y:.2f}" x2="{ML}" y2="{Y:.2f}" stroke="black"/>')
                out.append(f'<text x="{ML - 8}" y="{Y + 4:.2f}" text-anchor="end">{_fmt(v, self.logy)}</text>')
        out.append(f'<text x="{ML + pw / 2}" y="{H - 12}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{MT + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {MT + ph / 2})">{escape(self.ylabel)}</text>')
        for idx, ((kind, _, _, label, dashed, color), (x, y)) in enumerate(zip(self.series, pts)):
            c = color or PALETTE[idx % len(PALETTE)]
            if kind == "line" and x.size:
                path = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
                dash = ' stroke-dasharray="5,4"' if dashed else ""
                out.append(f'<polyline points="{path}" fill="none" stroke="{c}" stroke-width="1.5"{dash}/>')
            else:
                out.extend(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="{c}" fill-opacity="0.7"/>'
                           for a, b in zip(x, y))
            if label:
                ly = MT + 12 + 16 * idx
                out.append(f'<line x1="{W - MR + 10}" y1="{ly}" x2="{W - MR + 30}" y2="{ly}" stroke="{c}" stroke-width="2"/>')
                out.append(f'<text x="{W - MR + 35}" y="{ly + 4}">{escape(str(label))}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        Path(path).write_text(self.render())


def heatmap(M, title="", path=None) -> str:
    """Diverging red/blue heatmap of a matrix, symmetric around 0."""
    M = np.asarray(M, dtype=float)
    rows, cols = M.shape
    cell = max(6, min(28, 560 // max(cols, 1)))
    width, height = cols * cell + 80, rows * cell + 70
    vmax = float(np.abs(M).max()) or 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>']
    for i in range(rows):
        for k in range(cols):
            v = M[i, k] / vmax
            s = int(round(255 * (1 - abs(v))))
            color = f"rgb(255,{s},{s})" if v > 0 else f"rgb({s},{s},255)"
            out.append(f'<rect x="{50 + k * cell}" y="{40 + i * cell}" width="{cell}" height="{cell}" fill="{color}"/>')
        out.append(f'<text x="44" y="{40 + i * cell + cell / 2 + 4}" text-anchor="end">{i}</text>')
    out.append(f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">neuron (|max| = {vmax:.3g})</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
