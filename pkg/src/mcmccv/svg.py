"""Minimal deterministic SVG plots (box plots and line charts).

Output depends only on the input numbers: no timestamps, no random ids.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 720, 420
LEFT, RIGHT, TOP, BOTTOM = 80, 20, 40, 70
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not hi > lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * abs(step):
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


class _Canvas:
    def __init__(self, title: str, ylo: float, yhi: float):
        if not (math.isfinite(ylo) and math.isfinite(yhi)):
            ylo, yhi = -1.0, 1.0
        if yhi <= ylo:
            pad = max(abs(ylo) * 0.1, 1e-12)
            ylo, yhi = ylo - pad, yhi + pad
        pad = 0.05 * (yhi - ylo)
        self.ylo, self.yhi = ylo - pad, yhi + pad
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        ]

    def y(self, v: float) -> float:
        return TOP + (self.yhi - v) / (self.yhi - self.ylo) * (HEIGHT - TOP - BOTTOM)

    def axes(self, ylabel: str) -> None:
        x0, x1, yb = LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM
        self.parts.append(f'<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{yb}" stroke="black"/>')
        self.parts.append(f'<line x1="{x0}" y1="{yb}" x2="{x1}" y2="{yb}" stroke="black"/>')
        for t in _nice_ticks(self.ylo, self.yhi):
            yy = _f(self.y(t))
            self.parts.append(f'<line x1="{x0 - 4}" y1="{yy}" x2="{x0}" y2="{yy}" stroke="black"/>')
            self.parts.append(f'<text x="{x0 - 6}" y="{yy}" text-anchor="end" dominant-baseline="middle">{t:.4g}</text>')
        self.parts.append(
            f'<text x="16" y="{(TOP + yb) / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {(TOP + yb) / 2})">{escape(ylabel)}</text>'
        )

    def reference(self, value: float | None, label: str) -> None:
        if value is None or not math.isfinite(value):
            return
        yy = _f(self.y(value))
        self.parts.append(
            f'<line x1="{LEFT}" y1="{yy}" x2="{WIDTH - RIGHT}" y2="{yy}" stroke="#444" stroke-dasharray="6 4"/>'
        )
        self.parts.append(f'<text x="{WIDTH - RIGHT - 4}" y="{_f(self.y(value) - 4)}" text-anchor="end">{escape(label)}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def boxplot(groups: dict[str, list[float]], title: str, ylabel: str = "estimate", reference: float | None = None) -> str:
    """Tukey box plot (quartiles, 1.5 IQR whiskers, outliers as dots)."""
    data = {k: np.asarray([v for v in vals if math.isfinite(v)], dtype=float) for k, vals in groups.items()}
    finite = [a for a in data.values() if a.size]
    allv = np.concatenate(finite) if finite else np.array([0.0])
    lo, hi = float(allv.min()), float(allv.max())
    if reference is not None and math.isfinite(reference):
        lo, hi = min(lo, reference), max(hi, reference)
    c = _Canvas(title, lo, hi)
    c.axes(ylabel)
    slot = (WIDTH - LEFT - RIGHT) / max(len(data), 1)
    for i, (label, a) in enumerate(data.items()):
        cx = LEFT + slot * (i + 0.5)
        half = min(30.0, slot * 0.3)
        color = PALETTE[i % len(PALETTE)]
        c.parts.append(f'<text x="{_f(cx)}" y="{HEIGHT - BOTTOM + 18}" text-anchor="middle">{escape(label)}</text>')
        if a.size == 0:
            continue
        q1, med, q3 = np.percentile(a, [25, 50, 75])
        iqr = q3 - q1
        inside = a[(a >= q1 - 1.5 * iqr) & (a <= q3 + 1.5 * iqr)]
        wlo, whi = float(inside.min()), float(inside.max())
        c.parts.append(f'<line x1="{_f(cx)}" y1="{_f(c.y(wlo))}" x2="{_f(cx)}" y2="{_f(c.y(q1))}" stroke="{color}"/>')
        c.parts.append(f'<line x1="{_f(cx)}" y1="{_f(c.y(q3))}" x2="{_f(cx)}" y2="{_f(c.y(whi))}" stroke="{color}"/>')
        for w in (wlo, whi):
            c.parts.append(
                f'<line x1="{_f(cx - half / 2)}" y1="{_f(c.y(w))}" x2="{_f(cx + half / 2)}" y2="{_f(c.y(w))}" stroke="{color}"/>'
            )
        top, bot = c.y(q3), c.y(q1)
        c.parts.append(
            f'<rect x="{_f(cx - half)}" y="{_f(top)}" width="{_f(2 * half)}" height="{_f(max(bot - top, 0.5))}" '
            f'fill="{color}" fill-opacity="0.25" stroke="{color}"/>'
        )
        c.parts.append(
            f'<line x1="{_f(cx - half)}" y1="{_f(c.y(med))}" x2="{_f(cx + half)}" y2="{_f(c.y(med))}" stroke="{color}" stroke-width="2"/>'
        )
        for v in a[(a < wlo) | (a > whi)]:
            c.parts.append(f'<circle cx="{_f(cx)}" cy="{_f(c.y(v))}" r="2.5" fill="none" stroke="{color}"/>')
    c.reference(reference, "reference")
    return c.render()


def line_plot(
    series: dict[str, tuple[list[float], list[float]]],
    title: str,
    xlabel: str = "iterations",
    ylabel: str = "estimate",
    reference: float | None = None,
) -> str:
    pts = {k: [(float(x), float(y)) for x, y in zip(*xy) if math.isfinite(y)] for k, xy in series.items()}
    ys = [y for p in pts.values() for _, y in p]
    xs = [x for p in pts.values() for x, _ in p]
    if reference is not None and math.isfinite(reference):
        ys.append(reference)
    c = _Canvas(title, min(ys, default=-1.0), max(ys, default=1.0))
    c.axes(ylabel)
    xlo, xhi = min(xs, default=0.0), max(xs, default=1.0)
    if xhi <= xlo:
        xhi = xlo + 1.0

    def xpix(v):
        return LEFT + (v - xlo) / (xhi - xlo) * (WIDTH - LEFT - RIGHT)

    yb = HEIGHT - BOTTOM
    for t in _nice_ticks(xlo, xhi):
        xx = _f(xpix(t))
        c.parts.append(f'<line x1="{xx}" y1="{yb}" x2="{xx}" y2="{yb + 4}" stroke="black"/>')
        c.parts.append(f'<text x="{xx}" y="{yb + 16}" text-anchor="middle">{t:.6g}</text>')
    c.parts.append(f'<text x="{(LEFT + WIDTH - RIGHT) / 2}" y="{yb + 34}" text-anchor="middle">{escape(xlabel)}</text>')
    for i, (label, p) in enumerate(pts.items()):
        color = PALETTE[i % len(PALETTE)]
        if p:
            path = " ".join(f"{_f(xpix(x))},{_f(c.y(y))}" for x, y in p)
            c.parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = TOP + 14 * i + 6
        c.parts.append(f'<line x1="{LEFT + 10}" y1="{ly}" x2="{LEFT + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        c.parts.append(f'<text x="{LEFT + 34}" y="{ly}" dominant-baseline="middle">{escape(label)}</text>')
    c.reference(reference, "reference")
    return c.render()
