"""Minimal self-contained SVG charts.

Line and scatter plots with linear axes, nice tick placement, and a
legend, written as standalone .svg files. Covers exactly what the
report bundle needs; not a general plotting library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

PALETTE = ("#1b6ca8", "#d1495b", "#2e933c", "#8c5383", "#e08d2e", "#3b3b3b")

WIDTH = 720
HEIGHT = 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 18, 40, 52


@dataclass(frozen=True)
class Series:
    """One plotted series; kind is "line" or "scatter"."""

    label: str
    xs: tuple
    ys: tuple
    kind: str = "line"

    @staticmethod
    def of(label, xs, ys, kind="line") -> "Series":
        if kind not in ("line", "scatter"):
            raise ValueError(f"unknown series kind {kind!r}")
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if math.isfinite(float(x)) and math.isfinite(float(y))]
        return Series(label=label, xs=tuple(p[0] for p in pts),
                      ys=tuple(p[1] for p in pts), kind=kind)


def _nice_step(span: float, target: int) -> float:
    raw = span / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    norm = raw / mag
    for cut, step in ((1.5, 1.0), (3.0, 2.0), (7.0, 5.0)):
        if norm < cut:
            return step * mag
    return 10.0 * mag


def _ticks(lo: float, hi: float, target: int = 5):
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        lo, hi = lo - pad, hi + pad
    step = _nice_step(hi - lo, target)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + step * 1e-9:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return lo, hi, ticks


def _fmt_tick(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    s = f"{v:.6g}"
    return s


def chart(path, series, title: str = "", xlabel: str = "",
          ylabel: str = "") -> None:
    """Write one chart with the given Series list to an SVG file."""
    series = list(series)
    xs = [x for s in series for x in s.xs]
    ys = [y for s in series for y in s.ys]
    if xs:
        xlo, xhi, xticks = _ticks(min(xs), max(xs))
        ylo, yhi, yticks = _ticks(min(ys), max(ys))
    else:
        xlo, xhi, xticks = _ticks(0.0, 1.0)
        ylo, yhi, yticks = _ticks(0.0, 1.0)
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (x - xlo) / (xhi - xlo) * plot_w

    def py(y):
        return MARGIN_T + plot_h - (y - ylo) / (yhi - ylo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        '<g font-family="sans-serif" font-size="12" fill="#222222">',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" '
                   f'font-size="15">{escape(title)}</text>')
    out.append(f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" '
               f'height="{plot_h}" fill="none" stroke="#888888"/>')
    for t in xticks:
        x = px(t)
        out.append(f'<line x1="{x:.1f}" y1="{MARGIN_T + plot_h}" x2="{x:.1f}" '
                   f'y2="{MARGIN_T + plot_h + 5}" stroke="#888888"/>')
        out.append(f'<text x="{x:.1f}" y="{MARGIN_T + plot_h + 18}" '
                   f'text-anchor="middle">{_fmt_tick(t)}</text>')
    for t in yticks:
        y = py(t)
        out.append(f'<line x1="{MARGIN_L - 5}" y1="{y:.1f}" x2="{MARGIN_L}" '
                   f'y2="{y:.1f}" stroke="#888888"/>')
        out.append(f'<line x1="{MARGIN_L}" y1="{y:.1f}" '
                   f'x2="{MARGIN_L + plot_w}" y2="{y:.1f}" '
                   f'stroke="#eeeeee"/>')
        out.append(f'<text x="{MARGIN_L - 8}" y="{y + 4:.1f}" '
                   f'text-anchor="end">{_fmt_tick(t)}</text>')
    if xlabel:
        out.append(f'<text x="{MARGIN_L + plot_w / 2:.1f}" '
                   f'y="{HEIGHT - 12}" text-anchor="middle">'
                   f'{escape(xlabel)}</text>')
    if ylabel:
        cy = MARGIN_T + plot_h / 2
        out.append(f'<text x="16" y="{cy:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {cy:.1f})">'
                   f'{escape(ylabel)}</text>')

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = list(zip(s.xs, s.ys))
        if s.kind == "line" and len(pts) >= 2:
            coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
            out.append(f'<polyline points="{coords}" fill="none" '
                       f'stroke="{color}" stroke-width="1.6"/>')
        else:
            for x, y in pts:
                out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" '
                           f'r="2.4" fill="{color}" fill-opacity="0.75"/>')
    lx = MARGIN_L + plot_w - 10
    for i, s in enumerate(series):
        if not s.label:
            continue
        color = PALETTE[i % len(PALETTE)]
        ly = MARGIN_T + 14 + 16 * i
        out.append(f'<rect x="{lx - 150}" y="{ly - 9}" width="12" '
                   f'height="12" fill="{color}"/>')
        out.append(f'<text x="{lx - 133}" y="{ly + 1}">{escape(s.label)}</text>')
    out.append("</g></svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
