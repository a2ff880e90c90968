"""A small SVG renderer for line families and bar charts.

Output is deterministic text: coordinates are rounded to 0.01 px so reruns
produce identical files.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=40, bottom=55)


def _n(x):
    return f"{x:.2f}"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def _label(v):
    return f"{v:.4g}"


@dataclass
class Figure:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    log_y: bool = False
    series: list = field(default_factory=list)
    bars: list = field(default_factory=list)

    def line(self, x, y, label="", dashed=False, color=None):
        self.series.append((np.asarray(x, float), np.asarray(y, float), label, dashed, color))
        return self

    def bar(self, edges, heights, label="", color=None):
        self.bars.append((np.asarray(edges, float), np.asarray(heights, float), label, color))
        return self

    def _yt(self, y):
        if self.log_y:
            return np.log10(np.maximum(y, 1e-300))
        return y

    def _extent(self):
        xs, ys = [], []
        for x, y, *_ in self.series:
            ok = np.isfinite(x) & np.isfinite(self._yt(y))
            xs.append(x[ok])
            ys.append(self._yt(y)[ok])
        for e, h, *_ in self.bars:
            xs.append(e)
            ys.append(self._yt(h))
            if not self.log_y:
                ys.append(np.zeros(1))
        x = np.concatenate(xs) if xs else np.zeros(1)
        y = np.concatenate(ys) if ys else np.zeros(1)
        x0, x1, y0, y1 = float(x.min()), float(x.max()), float(y.min()), float(y.max())
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1
        pad = 0.04 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        x0, x1, y0, y1 = self._extent()
        pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

        def px(x):
            return MARGIN["left"] + (np.asarray(x) - x0) / (x1 - x0) * pw

        def py(y):
            return MARGIN["top"] + (1 - (np.asarray(y) - y0) / (y1 - y0)) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(self.title)}</text>',
        ]
        out.append(f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
                   'fill="none" stroke="#333"/>')
        for t in _ticks(x0, x1):
            xp = _n(float(px(t)))
            out.append(f'<line x1="{xp}" y1="{MARGIN["top"] + ph}" x2="{xp}" y2="{MARGIN["top"] + ph + 5}" stroke="#333"/>')
            out.append(f'<text x="{xp}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{_label(t)}</text>')
        for t in _ticks(y0, y1):
            yp = _n(float(py(t)))
            lab = _label(10 ** t) if self.log_y else _label(t)
            out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{yp}" x2="{MARGIN["left"]}" y2="{yp}" stroke="#333"/>')
            out.append(f'<text x="{MARGIN["left"] - 8}" y="{yp}" text-anchor="end" dominant-baseline="middle">{lab}</text>')
        out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2})">{escape(self.ylabel)}</text>')
        legend = []
        for i, (e, h, label, color) in enumerate(self.bars):
            color = color or PALETTE[i % len(PALETTE)]
            base = py(max(y0, 0.0)) if not self.log_y else py(y0)
            for a, b, v in zip(e[:-1], e[1:], self._yt(h)):
                top = py(v)
                yy, hh = (top, base - top) if top <= base else (base, top - base)
                out.append(f'<rect x="{_n(float(px(a)))}" y="{_n(float(yy))}" width="{_n(float(px(b) - px(a)))}" '
                           f'height="{_n(float(hh))}" fill="{color}" fill-opacity="0.55" stroke="{color}"/>')
            if label:
                legend.append((label, color, False))
        for i, (x, y, label, dashed, color) in enumerate(self.series):
            color = color or PALETTE[(i + len(self.bars)) % len(PALETTE)]
            yt = self._yt(y)
            ok = np.isfinite(x) & np.isfinite(yt)
            pts = " ".join(f"{_n(float(a))},{_n(float(b))}" for a, b in zip(px(x[ok]), py(yt[ok])))
            dash = ' stroke-dasharray="6,4"' if dashed else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>')
            if label:
                legend.append((label, color, dashed))
        for k, (label, color, dashed) in enumerate(legend):
            ly = MARGIN["top"] + 14 + 16 * k
            lx = MARGIN["left"] + pw - 150
            dash = ' stroke-dasharray="6,4"' if dashed else ""
            out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>')
            out.append(f'<text x="{lx + 30}" y="{ly}" dominant-baseline="middle">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.render())
