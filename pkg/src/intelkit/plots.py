"""Minimal deterministic SVG charts: labelled scatter with covariance ellipses,
SNR curves, and vowel-space polygons."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 480
MARGIN = 60
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _n(v: float) -> str:
    return f"{v:.4f}".rstrip("0").rstrip(".") if v == v else "0"


def _colors(labels) -> dict:
    return {lab: PALETTE[i % len(PALETTE)] for i, lab in enumerate(labels)}


class _Frame:
    """Linear map from a data box onto the plotting area, y axis pointing up."""

    def __init__(self, xlo, xhi, ylo, yhi, pad=0.08):
        if xhi <= xlo:
            xlo, xhi = xlo - 1, xhi + 1
        if yhi <= ylo:
            ylo, yhi = ylo - 1, yhi + 1
        dx, dy = (xhi - xlo) * pad, (yhi - ylo) * pad
        self.xlo, self.xhi, self.ylo, self.yhi = xlo - dx, xhi + dx, ylo - dy, yhi + dy
        self.sx = (WIDTH - 2 * MARGIN) / (self.xhi - self.xlo)
        self.sy = (HEIGHT - 2 * MARGIN) / (self.yhi - self.ylo)

    def x(self, v):
        return MARGIN + (v - self.xlo) * self.sx

    def y(self, v):
        return HEIGHT - MARGIN - (v - self.ylo) * self.sy

    def data_group(self) -> str:
        # children of this group are drawn in data coordinates
        tx = MARGIN - self.xlo * self.sx
        ty = HEIGHT - MARGIN + self.ylo * self.sy
        return f'<g transform="translate({_n(tx)} {_n(ty)}) scale({_n(self.sx)} {_n(-self.sy)})">'


def _document(body: list[str], title: str, xlabel: str, ylabel: str) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" height="{HEIGHT - 2 * MARGIN}" '
        'fill="none" stroke="black"/>',
        f'<text x="{WIDTH // 2}" y="{MARGIN // 2}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{HEIGHT // 2}" text-anchor="middle" transform="rotate(-90 15 {HEIGHT // 2})">'
        f"{escape(ylabel)}</text>",
    ]
    return "\n".join(head + body + ["</svg>", ""])


def _legend(colors: Mapping[str, str]) -> list[str]:
    out = []
    for i, (label, color) in enumerate(colors.items()):
        y = MARGIN + 14 + 16 * i
        out.append(
            f'<g class="legend-entry"><rect x="{WIDTH - MARGIN - 110}" y="{y - 9}" width="10" height="10" '
            f'fill="{color}"/><text x="{WIDTH - MARGIN - 95}" y="{y}">{escape(str(label))}</text></g>'
        )
    return out


def _write(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def ellipse_geometry(cov, n_sigma: float = 2.0) -> Optional[tuple[float, float, float]]:
    """Semi-axes and rotation (degrees) of the ``n_sigma`` ellipse of a 2x2 covariance.

    Returns ``None`` when the covariance is zero.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (2, 2):
        raise ValueError("covariance must be 2x2")
    evals, evecs = np.linalg.eigh((cov + cov.T) / 2)
    evals = np.clip(evals, 0.0, None)
    if evals[1] <= 0:
        return None
    major = evecs[:, 1]
    angle = math.degrees(math.atan2(major[1], major[0]))
    return n_sigma * math.sqrt(evals[1]), n_sigma * math.sqrt(evals[0]), angle


def render_scatter_svg(
    points: Sequence[tuple[str, float, float]],
    path,
    ellipses: Optional[Sequence[tuple[str, Sequence[float], Sequence[Sequence[float]]]]] = None,
    title: str = "",
    xlabel: str = "PC1",
    ylabel: str = "PC2",
    n_sigma: float = 2.0,
) -> None:
    """Scatter of labelled points; optional per-cluster centroid and ``n_sigma`` covariance ellipse."""
    if not points:
        raise ValueError("scatter needs at least one point")
    ellipses = list(ellipses or [])
    labels = sorted({p[0] for p in points} | {e[0] for e in ellipses})
    colors = _colors(labels)
    xs = [p[1] for p in points]
    ys = [p[2] for p in points]
    geoms = []
    for label, center, cov in ellipses:
        g = ellipse_geometry(cov, n_sigma)
        geoms.append((label, center, g))
        if g is not None:
            reach = g[0]
            xs += [center[0] - reach, center[0] + reach]
            ys += [center[1] - reach, center[1] + reach]
    frame = _Frame(min(xs), max(xs), min(ys), max(ys))
    body = [frame.data_group()]
    for label, center, g in geoms:
        if g is None:
            continue
        rx, ry, angle = g
        body.append(
            f'<ellipse class="cov" cx="{_n(center[0])}" cy="{_n(center[1])}" rx="{_n(rx)}" ry="{_n(ry)}" '
            f'transform="rotate({_n(angle)} {_n(center[0])} {_n(center[1])})" fill="{colors[label]}" '
            'fill-opacity="0.15" stroke="none"/>'
        )
    body.append("</g>")
    for label, x, y in points:
        body.append(
            f'<circle class="point" cx="{_n(frame.x(x))}" cy="{_n(frame.y(y))}" r="3" fill="{colors[label]}"/>'
        )
    for label, center, _ in geoms:
        body.append(
            f'<circle class="centroid" cx="{_n(frame.x(center[0]))}" cy="{_n(frame.y(center[1]))}" r="4" fill="red"/>'
        )
    body += _legend(colors)
    _write(path, _document(body, title, xlabel, ylabel))


def render_curve_svg(
    series: Mapping[str, Sequence[tuple[float, float]]],
    path,
    y_range: Optional[tuple[float, float]] = (0.0, 1.0),
    title: str = "",
    xlabel: str = "SNR (dB)",
    ylabel: str = "eSTOI",
) -> None:
    """Polyline chart over SNR categories; ``inf`` sits on a detached rightmost tick.

    With ``y_range`` set (the default is the eSTOI range), values outside it are rejected.
    """
    if not series:
        raise ValueError("no series to plot")
    for label, pts in series.items():
        if not pts:
            raise ValueError(f"series {label!r} is empty")
        if y_range is not None:
            for _, y in pts:
                if not (y_range[0] <= y <= y_range[1]):
                    raise ValueError(f"series {label!r}: value {y} outside {y_range}")
    finite = sorted({x for pts in series.values() for x, _ in pts if math.isfinite(x)})
    has_inf = any(math.isinf(x) for pts in series.values() for x, _ in pts)
    slots = {x: float(i) for i, x in enumerate(finite)}
    if has_inf:
        slots[math.inf] = len(finite) + 0.5 if finite else 0.0
    all_y = [y for pts in series.values() for _, y in pts]
    ylo, yhi = y_range if y_range is not None else (min(all_y), max(all_y))
    frame = _Frame(-0.5, max(slots.values()) + 0.5, ylo, yhi, pad=0.02)
    colors = _colors(list(series))
    body = []
    for x, slot in sorted(slots.items()):
        px = _n(frame.x(slot))
        body.append(
            f'<g class="tick"><line x1="{px}" y1="{HEIGHT - MARGIN}" x2="{px}" y2="{HEIGHT - MARGIN + 5}" '
            f'stroke="black"/><text x="{px}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle">'
            f'{"∞" if math.isinf(x) else _n(x)}</text></g>'
        )
    for label, pts in series.items():
        color = colors[label]
        finite_pts = sorted((x, y) for x, y in pts if math.isfinite(x))
        if finite_pts:
            coords = " ".join(f"{_n(frame.x(slots[x]))},{_n(frame.y(y))}" for x, y in finite_pts)
            body.append(f'<polyline class="series" points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            cls = "detached" if math.isinf(x) else "marker"
            body.append(
                f'<circle class="{cls}" cx="{_n(frame.x(slots[x]))}" cy="{_n(frame.y(y))}" r="3" fill="{color}"/>'
            )
    body += _legend(colors)
    _write(path, _document(body, title, xlabel, ylabel))


def render_vowel_space_svg(polygons: Mapping[str, object], path, title: str = "Vowel space") -> None:
    """Per-vowel mean points and hull outline for each labelled :class:`VowelSpacePolygon`."""
    if not polygons:
        raise ValueError("no vowel spaces to plot")
    xs = [p[1] for poly in polygons.values() for p in poly.points.values()]
    ys = [p[0] for poly in polygons.values() for p in poly.points.values()]
    frame = _Frame(min(xs), max(xs), min(ys), max(ys))
    colors = _colors(list(polygons))
    body = []
    for label, poly in polygons.items():
        color = colors[label]
        if len(poly.hull) >= 3:
            coords = " ".join(f"{_n(frame.x(f2))},{_n(frame.y(f1))}" for f1, f2 in poly.hull)
            body.append(f'<polygon class="hull" points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for vowel, (f1, f2) in sorted(poly.points.items()):
            body.append(
                f'<g class="vowel"><circle cx="{_n(frame.x(f2))}" cy="{_n(frame.y(f1))}" r="3" fill="{color}"/>'
                f'<text x="{_n(frame.x(f2) + 5)}" y="{_n(frame.y(f1) - 5)}">{escape(vowel)}</text></g>'
            )
    body += _legend(colors)
    _write(path, _document(body, title, "F2 (Hz)", "F1 (Hz)"))
