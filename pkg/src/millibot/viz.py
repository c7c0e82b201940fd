"""Small SVG writer for masks, planned paths and trajectories."""

from __future__ import annotations

import numpy as np

from .planner import CanalMask

VIEW_HALF_MM = 46.0


def _outline_segments(pixels: np.ndarray, step: int):
    """Boundary edges of a block-downsampled mask as (r0, c0, r1, c1) in
    downsampled cell units."""
    ny, nx = pixels.shape
    small = pixels[: ny - ny % step, : nx - nx % step]
    small = small.reshape(ny // step, step, nx // step, step).mean(axis=(1, 3)) >= 0.5
    pad = np.pad(small, 1)
    segs = []
    # horizontal edges between rows
    diff = pad[1:, 1:-1] != pad[:-1, 1:-1]
    for r, c in zip(*np.nonzero(diff)):
        segs.append((r, c, r, c + 1))
    diff = pad[1:-1, 1:] != pad[1:-1, :-1]
    for r, c in zip(*np.nonzero(diff)):
        segs.append((r, c, r + 1, c))
    return segs, small.shape


def _polyline(points, to_px, **attrs) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (to_px(p) for p in points))
    extra = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
    return f'<polyline points="{pts}" fill="none" {extra}/>'


def svg_document(mask: CanalMask | None = None, desired=None, actual=None, waypoints=None,
                 feasible=None, size: int = 600, step: int = 6) -> str:
    half = VIEW_HALF_MM
    if mask is not None:
        half = max(half, 0.5 * mask.pixel_size * max(mask.shape))
    scale = size / (2 * half)

    def to_px(p):
        return (p[0] + half) * scale, (half - p[1]) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">', f'<rect width="{size}" height="{size}" fill="white"/>']
    if mask is not None:
        if feasible is not None:
            rows, cols = np.nonzero(feasible[::step, ::step])
            cell = mask.pixel_size * step * scale
            centers = mask.px_to_mm(np.column_stack([rows * step, cols * step]))
            parts.append('<g fill="#cfe8cf" stroke="none">')
            for x, y in centers:
                px, py = to_px((x, y))
                parts.append(f'<rect x="{px:.2f}" y="{py:.2f}" width="{cell:.2f}" height="{cell:.2f}"/>')
            parts.append("</g>")
        segs, _ = _outline_segments(mask.pixels, step)
        parts.append('<g stroke="#333" stroke-width="1">')
        for r0, c0, r1, c1 in segs:
            a = mask.px_to_mm((r0 * step - 0.5, c0 * step - 0.5))
            b = mask.px_to_mm((r1 * step - 0.5, c1 * step - 0.5))
            (x0, y0), (x1, y1) = to_px(a), to_px(b)
            parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}"/>')
        parts.append("</g>")
    if desired is not None and len(desired):
        parts.append(_polyline(desired, to_px, stroke="#1f77b4", stroke_width=2, stroke_dasharray="6,4"))
    if waypoints is not None:
        for p in waypoints:
            x, y = to_px(p)
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="#1f77b4"/>')
    if actual is not None and len(actual):
        parts.append(_polyline(actual, to_px, stroke="#d62728", stroke_width=1.5))
        for p, color in ((actual[0], "#2ca02c"), (actual[-1], "#000")):
            x, y = to_px(p)
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="5" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
