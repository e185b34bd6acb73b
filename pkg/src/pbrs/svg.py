"""Deterministic SVG line charts of learning curves.

Output depends only on the input numbers and style, never on the clock or
library versions, so a chart can be pinned byte-for-byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .curves import LearningCurve
from .errors import ConfigurationError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


@dataclass(frozen=True)
class Style:
    width: int = 640
    height: int = 400
    margin_left: int = 60
    margin_right: int = 170
    margin_top: int = 30
    margin_bottom: int = 45
    title: str = ""
    x_label: str = "training steps"
    y_label: str = "mean evaluation episode length"
    band_opacity: float = 0.2
    ticks: int = 5


def _num(x: float) -> str:
    # Two decimals is sub-pixel; strip noise so output is stable.
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _tick_label(x: float) -> str:
    return f"{x:.6g}"


def _bounds(series: Mapping[str, LearningCurve]) -> tuple[float, float, float, float]:
    xs, lo, hi = [], [], []
    for c in series.values():
        xs.extend(float(v) for v in c.train_step)
        lo.extend(float(m - s) for m, s in zip(c.mean_len, c.sem_len))
        hi.extend(float(m + s) for m, s in zip(c.mean_len, c.sem_len))
    x0, x1, y0, y1 = min(xs), max(xs), min(lo), max(hi)
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0
    if y1 == y0:
        pad = max(abs(y0) * 0.1, 1.0)
        y0, y1 = y0 - pad, y1 + pad
    return x0, x1, y0, y1


def render_svg(series: Mapping[str, LearningCurve], style: Style = Style()) -> str:
    """One polyline per series over a shaded mean +/- sem band."""
    if not series:
        raise ConfigurationError("nothing to plot: empty series list")
    for label, c in series.items():
        if len(c) == 0:
            raise ConfigurationError(f"series {label!r} is empty")
        values = list(c.mean_len) + list(c.sem_len)
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError(f"series {label!r} has non-finite values")

    x0, x1, y0, y1 = _bounds(series)
    left, top = style.margin_left, style.margin_top
    pw = style.width - style.margin_left - style.margin_right
    ph = style.height - style.margin_top - style.margin_bottom

    def px(x: float) -> float:
        return left + (x - x0) / (x1 - x0) * pw

    def py(y: float) -> float:
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{style.width}" '
           f'height="{style.height}" viewBox="0 0 {style.width} {style.height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{style.width}" height="{style.height}" fill="white"/>']
    if style.title:
        out.append(f'<text x="{_num(left + pw / 2)}" y="{_num(top - 10)}" '
                   f'text-anchor="middle" font-size="13">{escape(style.title)}</text>')

    # Axes and ticks.
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" '
               f'fill="none" stroke="black"/>')
    n = max(style.ticks, 1)
    for i in range(n + 1):
        xv = x0 + (x1 - x0) * i / n
        yv = y0 + (y1 - y0) * i / n
        X, Y = _num(px(xv)), _num(py(yv))
        out.append(f'<line x1="{X}" y1="{top + ph}" x2="{X}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{X}" y="{top + ph + 16}" text-anchor="middle">'
                   f'{_tick_label(xv)}</text>')
        out.append(f'<line x1="{left - 4}" y1="{Y}" x2="{left}" y2="{Y}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{Y}" text-anchor="end" '
                   f'dominant-baseline="middle">{_tick_label(yv)}</text>')
    out.append(f'<text x="{_num(left + pw / 2)}" y="{style.height - 8}" '
               f'text-anchor="middle">{escape(style.x_label)}</text>')
    out.append(f'<text x="14" y="{_num(top + ph / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 14 {_num(top + ph / 2)})">{escape(style.y_label)}</text>')

    for k, (label, c) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        xs = [px(float(v)) for v in c.train_step]
        upper = [py(float(m + s)) for m, s in zip(c.mean_len, c.sem_len)]
        lower = [py(float(m - s)) for m, s in zip(c.mean_len, c.sem_len)]
        mean = [py(float(m)) for m in c.mean_len]
        band = [f"{_num(x)},{_num(y)}" for x, y in zip(xs, upper)]
        band += [f"{_num(x)},{_num(y)}" for x, y in zip(reversed(xs), reversed(lower))]
        out.append(f'<polygon class="sem" points="{" ".join(band)}" fill="{color}" '
                   f'fill-opacity="{style.band_opacity}" stroke="none"/>')
        line = " ".join(f"{_num(x)},{_num(y)}" for x, y in zip(xs, mean))
        out.append(f'<polyline class="mean" points="{line}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        ly = top + 12 + 16 * k
        lx = left + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}" dominant-baseline="middle">'
                   f'{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(series: Mapping[str, LearningCurve], path, style: Style = Style()) -> None:
    text = render_svg(series, style)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def merge_series(groups: Sequence[Mapping[str, LearningCurve]],
                 names: Sequence[str]) -> dict[str, LearningCurve]:
    """Combine series from several files, prefixing labels when they clash."""
    out: dict[str, LearningCurve] = {}
    for name, group in zip(names, groups):
        for label, c in group.items():
            key = label if label not in out else f"{name}: {label}"
            out[key] = c
    return out
