"""Minimal deterministic SVG line-chart builder.

No plotting library: figures are assembled from primitives with fixed
two-decimal coordinate formatting, so identical inputs produce identical
bytes. Only what the four figure kinds need is implemented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .style import Style


def esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def fmt(v: float) -> str:
    """Pixel coordinate with fixed precision (keeps output byte-stable)."""
    return f"{v:.2f}"


def tick_label(v: float) -> str:
    return f"{round(v, 9):.6g}"


def nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi] on the 1-2-5 ladder."""
    span = hi - lo
    if span <= 0.0:
        return [lo]
    rough = span / count
    mag = 10.0 ** math.floor(math.log10(rough))
    step = next((m * mag for m in (1.0, 2.0, 5.0, 10.0) if m * mag >= rough), rough)
    ticks = []
    v = math.ceil(lo / step) * step
    while v <= hi + step * 1e-9:
        ticks.append(round(v, 12))
        v += step
    return ticks


def line(x1, y1, x2, y2, color, width=1.0, dash=None) -> str:
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<line x1="{fmt(x1)}" y1="{fmt(y1)}" x2="{fmt(x2)}" y2="{fmt(y2)}" '
        f'stroke="{color}" stroke-width="{fmt(width)}"{d}/>\n'
    )


def text(x, y, s, size, color, anchor="start", rotate=None) -> str:
    r = f' transform="rotate({rotate},{fmt(x)},{fmt(y)})"' if rotate is not None else ""
    return (
        f'<text x="{fmt(x)}" y="{fmt(y)}" font-size="{fmt(size)}" fill="{color}" '
        f'text-anchor="{anchor}"{r}>{esc(s)}</text>\n'
    )


def rect(x, y, w, h, fill, opacity=None) -> str:
    o = f' fill-opacity="{opacity}"' if opacity is not None else ""
    return f'<rect x="{fmt(x)}" y="{fmt(y)}" width="{fmt(w)}" height="{fmt(h)}" fill="{fill}"{o}/>\n'


def circle(x, y, r, color, width=1.0) -> str:
    return (
        f'<circle cx="{fmt(x)}" cy="{fmt(y)}" r="{fmt(r)}" fill="none" '
        f'stroke="{color}" stroke-width="{fmt(width)}"/>\n'
    )


def document(style: Style, body: str) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {fmt(style.width)} '
        f'{fmt(style.height)}" font-family="{style.font_family}">\n'
        + rect(0, 0, style.width, style.height, style.background)
        + body
        + "</svg>\n"
    )


@dataclass(frozen=True)
class Series:
    """One polyline: paired x/y samples (NaN pairs are dropped)."""

    x: np.ndarray
    y: np.ndarray
    color: str
    label: str
    width: float = 1.4
    dash: str | None = None

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("series x and y must have the same length")
        if len(self.x) == 0:
            raise ValueError("series must not be empty")


@dataclass(frozen=True)
class HLine:
    value: float
    color: str
    label: str
    dash: str = "6,4"


@dataclass(frozen=True)
class Marker:
    x: float
    y: float
    color: str
    label: str


def _finite_xy(s: Series) -> tuple[np.ndarray, np.ndarray]:
    mask = np.isfinite(s.x) & np.isfinite(s.y)
    if not mask.any():
        raise ValueError(f"series {s.label!r} has no finite points")
    return s.x[mask], s.y[mask]


def _data_ranges(series, hlines, markers) -> tuple[float, float, float, float]:
    xs, ys = [], []
    for s in series:
        x, y = _finite_xy(s)
        xs.append((x.min(), x.max()))
        ys.append((y.min(), y.max()))
    x_lo = min(a for a, _ in xs)
    x_hi = max(b for _, b in xs)
    y_lo = min(a for a, _ in ys)
    y_hi = max(b for _, b in ys)
    for h in hlines:
        y_lo, y_hi = min(y_lo, h.value), max(y_hi, h.value)
    for m in markers:
        x_lo, x_hi = min(x_lo, m.x), max(x_hi, m.x)
        y_lo, y_hi = min(y_lo, m.y), max(y_hi, m.y)
    return x_lo, x_hi, y_lo, y_hi


def _pad(lo: float, hi: float) -> tuple[float, float]:
    span = hi - lo
    if span <= 0.0:
        span = max(abs(lo), 1.0) * 0.2
        return lo - span / 2, hi + span / 2
    return lo - 0.05 * span, hi + 0.05 * span


def build_chart(
    *,
    title: str,
    x_label: str,
    y_label: str,
    series: list[Series],
    style: Style,
    hlines: tuple[HLine, ...] = (),
    markers: tuple[Marker, ...] = (),
    x_range: tuple[float, float] | None = None,
    y_range: tuple[float, float] | None = None,
) -> str:
    """Assemble one framed line chart with grid, ticks and a legend."""
    if not series:
        raise ValueError("chart needs at least one series")
    st = style
    px0, py0 = st.margin_left, st.margin_top
    pw = st.width - st.margin_left - st.margin_right
    ph = st.height - st.margin_top - st.margin_bottom

    x_lo, x_hi, y_lo, y_hi = _data_ranges(series, hlines, markers)
    if x_range is not None:
        x_lo, x_hi = x_range
    else:
        x_lo, x_hi = _pad(x_lo, x_hi)
    if y_range is not None:
        y_lo, y_hi = y_range
    else:
        y_lo, y_hi = _pad(y_lo, y_hi)

    def x_of(v):
        return px0 + (v - x_lo) / (x_hi - x_lo) * pw

    def y_of(v):
        return py0 + ph - (v - y_lo) / (y_hi - y_lo) * ph

    body = text(px0, py0 - 18, title, st.title_size, st.text_color)

    x_ticks = nice_ticks(x_lo, x_hi)
    y_ticks = nice_ticks(y_lo, y_hi)
    for v in y_ticks:
        body += line(px0, y_of(v), px0 + pw, y_of(v), st.grid_color, 0.6)
    for h in hlines:
        body += line(px0, y_of(h.value), px0 + pw, y_of(h.value), h.color, 1.2, h.dash)
    for s in series:
        x, y = _finite_xy(s)
        pts = " ".join(f"{fmt(x_of(a))},{fmt(y_of(b))}" for a, b in zip(x, y))
        d = f' stroke-dasharray="{s.dash}"' if s.dash else ""
        body += (
            f'<polyline fill="none" stroke="{s.color}" '
            f'stroke-width="{fmt(s.width)}"{d} points="{pts}"/>\n'
        )
    for m in markers:
        body += circle(x_of(m.x), y_of(m.y), 5.0, m.color, 1.6)
        body += line(x_of(m.x) - 8, y_of(m.y), x_of(m.x) + 8, y_of(m.y), m.color, 0.8)
        body += line(x_of(m.x), y_of(m.y) - 8, x_of(m.x), y_of(m.y) + 8, m.color, 0.8)
        body += text(x_of(m.x) + 9, y_of(m.y) - 7, m.label, st.font_size - 2, m.color)

    body += line(px0, py0, px0, py0 + ph, st.frame_color, 0.8)
    body += line(px0, py0 + ph, px0 + pw, py0 + ph, st.frame_color, 0.8)
    for v in x_ticks:
        body += line(x_of(v), py0 + ph, x_of(v), py0 + ph + 4, st.frame_color, 0.6)
        body += text(x_of(v), py0 + ph + 16, tick_label(v), st.font_size - 2, st.muted_color, "middle")
    for v in y_ticks:
        body += line(px0 - 4, y_of(v), px0, y_of(v), st.frame_color, 0.6)
        body += text(px0 - 7, y_of(v) + 3, tick_label(v), st.font_size - 2, st.muted_color, "end")
    body += text(px0 + pw / 2, st.height - 10, x_label, st.font_size, st.text_color, "middle")
    body += text(16, py0 + ph / 2, y_label, st.font_size, st.text_color, "middle", rotate=-90)

    entries = [(s.color, s.dash, s.label) for s in series]
    entries += [(h.color, h.dash, h.label) for h in hlines]
    if entries:
        row_h = 14.0
        box_w = max(len(lbl) for _, _, lbl in entries) * (st.font_size - 2) * 0.62 + 34
        bx = px0 + pw - box_w - 4
        by = py0 + 4
        body += rect(bx, by, box_w, row_h * len(entries) + 6, st.background, opacity=0.88)
        for i, (color, dash, lbl) in enumerate(entries):
            yy = by + 10 + i * row_h
            body += line(bx + 6, yy, bx + 24, yy, color, 1.6, dash)
            body += text(bx + 28, yy + 3, lbl, st.font_size - 2, st.text_color)
    return document(st, body)
