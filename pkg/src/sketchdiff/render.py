"""SVG rendering: sketches with a black-to-yellow draw-order color map,
and simple metric-curve plots."""

from __future__ import annotations

import numpy as np

from .data import PEN_UP, ThreePointSketch
from .errors import ContractError


def topology_color(frac: float) -> str:
    """Color for a point at normalized draw-order position frac in [0, 1]:
    black at the start ramping to yellow at the end."""
    frac = min(max(float(frac), 0.0), 1.0)
    c = int(round(255 * frac))
    return f"#{c:02x}{c:02x}00"


def sketch_to_svg(sketch: ThreePointSketch, size: int = 256, margin: int = 8) -> str:
    """Render one sketch as an SVG string. Each on-stroke segment is a line
    colored by the index of its starting point, so draw order reads as a
    black-to-yellow ramp; pen-up boundaries break the path."""
    pts = sketch.xy
    lo = pts.min(axis=0)
    span = float(max((pts.max(axis=0) - lo).max(), 1e-9))
    scale = (size - 2 * margin) / span

    def sx(p):
        return margin + (p[0] - lo[0]) * scale

    def sy(p):
        # SVG y grows downward
        return size - margin - (p[1] - lo[1]) * scale

    n = len(sketch)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for j in range(n - 1):
        if sketch.pen[j] == PEN_UP:
            continue  # stroke ends here; no segment to the next point
        color = topology_color(j / max(n - 2, 1))
        parts.append(
            f'<line x1="{sx(pts[j]):.2f}" y1="{sy(pts[j]):.2f}" '
            f'x2="{sx(pts[j + 1]):.2f}" y2="{sy(pts[j + 1]):.2f}" '
            f'stroke="{color}" stroke-width="2" stroke-linecap="round"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def sketch_grid_svg(sketches: list[ThreePointSketch], cell: int = 192, cols: int = 4) -> str:
    """Tile several sketches into one SVG document."""
    if not sketches:
        raise ContractError("nothing to render")
    cols = min(cols, len(sketches))
    rows = (len(sketches) + cols - 1) // cols
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{cols * cell}" '
        f'height="{rows * cell}" viewBox="0 0 {cols * cell} {rows * cell}">'
    ]
    for i, sk in enumerate(sketches):
        x = (i % cols) * cell
        y = (i // cols) * cell
        inner = sketch_to_svg(sk, size=cell)
        parts.append(f'<g transform="translate({x},{y})">{inner}</g>')
    parts.append("</svg>")
    return "\n".join(parts)


def curve_svg(xs: list[float], ys: list[float], size: int = 320, margin: int = 32) -> str:
    """Minimal line plot of y against x (used for metric-vs-factor curves)."""
    if len(xs) != len(ys) or not xs:
        raise ContractError("curve needs matching non-empty x and y lists")
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x_span = float(max(xs.max() - xs.min(), 1e-12))
    y_span = float(max(ys.max() - ys.min(), 1e-12))

    def px(x):
        return margin + (x - xs.min()) / x_span * (size - 2 * margin)

    def py(y):
        return size - margin - (y - ys.min()) / y_span * (size - 2 * margin)

    path = " ".join(f"{'M' if i == 0 else 'L'} {px(x):.2f} {py(y):.2f}" for i, (x, y) in enumerate(zip(xs, ys)))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<path d="{path}" fill="none" stroke="black" stroke-width="1.5"/>',
    ]
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="black"/>')
    parts.append("</svg>")
    return "\n".join(parts)
