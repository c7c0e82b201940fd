"""Path planning on a binary canal image.

Pixel (row, col) maps to millimetres in an image-centred frame with y up:
x = (col - (nx-1)/2) * pixel_size, y = ((ny-1)/2 - row) * pixel_size.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import EmptyFeasibleError, NoPathError, ParseError
from .sensing import PIXEL_SIZE_MM


@dataclass(frozen=True)
class CanalMask:
    pixels: np.ndarray  # (ny, nx) bool, True = navigable
    pixel_size: float = PIXEL_SIZE_MM

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=bool)
        object.__setattr__(self, "pixels", px)
        if px.ndim != 2 or not px.any():
            raise ValueError("mask must be 2-D with at least one navigable pixel")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")

    @property
    def shape(self):
        return self.pixels.shape

    def px_to_mm(self, rc) -> np.ndarray:
        rc = np.asarray(rc, dtype=np.float64)
        ny, nx = self.pixels.shape
        x = (rc[..., 1] - (nx - 1) / 2.0) * self.pixel_size
        y = ((ny - 1) / 2.0 - rc[..., 0]) * self.pixel_size
        return np.stack([x, y], axis=-1)

    def mm_to_px(self, xy) -> np.ndarray:
        """Fractional (row, col) of a point in mm."""
        xy = np.asarray(xy, dtype=np.float64)
        ny, nx = self.pixels.shape
        col = xy[..., 0] / self.pixel_size + (nx - 1) / 2.0
        row = (ny - 1) / 2.0 - xy[..., 1] / self.pixel_size
        return np.stack([row, col], axis=-1)

    def contains_mm(self, xy) -> bool:
        r, c = np.round(self.mm_to_px(xy)).astype(int)
        ny, nx = self.pixels.shape
        return bool(0 <= r < ny and 0 <= c < nx and self.pixels[r, c])


@dataclass(frozen=True)
class CostMap:
    feasible: np.ndarray
    cost: np.ndarray  # inf where infeasible
    clearance: np.ndarray  # mm


@dataclass(frozen=True)
class PlannedPath:
    waypoints: np.ndarray  # (n, 2) mm
    total_length: float  # mm
    pixel_path: np.ndarray | None = None  # (k, 2) raw A* pixels

    def gaps(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)


# --------------------------------------------------------------------------
# distance transform and cost map
# --------------------------------------------------------------------------

def distance_transform(mask: CanalMask) -> np.ndarray:
    """Exact Euclidean clearance (mm) to the nearest obstacle pixel.

    Pixels on the image border count as obstacles.
    """
    free = mask.pixels.copy()
    free[0, :] = False
    free[-1, :] = False
    free[:, 0] = False
    free[:, -1] = False
    return np.sqrt(kernels.edt_sq(free)) * mask.pixel_size


def build_cost_map(clearance, min_clearance: float = 5.0, w_clear: float = 0.5,
                   navigable=None) -> CostMap:
    """Feasible set above ``min_clearance`` and a cost in [1, 1 + w_clear]
    that falls linearly with clearance."""
    clearance = np.asarray(clearance, dtype=np.float64)
    feasible = clearance >= min_clearance
    if navigable is not None:
        feasible &= np.asarray(navigable, dtype=bool)
    if not feasible.any():
        raise EmptyFeasibleError(f"no pixel has clearance >= {min_clearance} mm")
    cmax = float(clearance[feasible].max())
    cost = np.full(clearance.shape, np.inf)
    cost[feasible] = 1.0 + w_clear * (1.0 - clearance[feasible] / cmax)
    return CostMap(feasible=feasible, cost=cost, clearance=clearance)


# --------------------------------------------------------------------------
# search
# --------------------------------------------------------------------------

def astar(costmap: CostMap, start_px, goal_px):
    """8-connected A*; returns (pixel path as (k, 2) int array, total cost)."""
    cost = costmap.cost if isinstance(costmap, CostMap) else np.asarray(costmap, dtype=np.float64)
    sr, sc = (int(v) for v in start_px)
    gr, gc = (int(v) for v in goal_px)
    ny, nx = cost.shape
    for name, (r, c) in (("start", (sr, sc)), ("goal", (gr, gc))):
        if not (0 <= r < ny and 0 <= c < nx) or not np.isfinite(cost[r, c]):
            raise NoPathError(f"{name} pixel {(r, c)} is not feasible")
    parent, total = kernels.astar_search(np.ascontiguousarray(cost), sr, sc, gr, gc)
    if not np.isfinite(total):
        raise NoPathError(f"goal {(gr, gc)} unreachable from {(sr, sc)}")
    path = [gr * nx + gc]
    start = sr * nx + sc
    while path[-1] != start:
        path.append(int(parent[path[-1]]))
    idx = np.array(path[::-1], dtype=np.int64)
    return np.stack([idx // nx, idx % nx], axis=1), float(total)


def project_to_feasible(point_px, costmap: CostMap):
    """Nearest feasible pixel to a (row, col) point; ties go to the first in
    row-major order."""
    feasible = costmap.feasible if isinstance(costmap, CostMap) else np.asarray(costmap, dtype=bool)
    rows, cols = np.nonzero(feasible)
    if rows.size == 0:
        raise EmptyFeasibleError("cost map has no feasible pixel")
    r0, c0 = float(point_px[0]), float(point_px[1])
    d2 = (rows - r0) ** 2 + (cols - c0) ** 2
    k = int(np.argmin(d2))
    return int(rows[k]), int(cols[k])


# --------------------------------------------------------------------------
# smoothing, resampling, timing
# --------------------------------------------------------------------------

def moving_average(points, window: int = 7) -> np.ndarray:
    """Centred moving average; the window shrinks symmetrically at the ends."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    half = window // 2
    csum = np.vstack([np.zeros((1, pts.shape[1])), np.cumsum(pts, axis=0)])
    out = np.empty_like(pts)
    for i in range(n):
        h = min(half, i, n - 1 - i)
        out[i] = (csum[i + h + 1] - csum[i - h]) / (2 * h + 1)
    return out


def resample_arclength(points, n: int):
    pts = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(s[-1])
    stations = np.linspace(0.0, total, n)
    out = np.column_stack([np.interp(stations, s, pts[:, k]) for k in range(pts.shape[1])])
    return out, total


def smooth_resample(pixel_path, window: int = 7, n: int = 10, pixel_size: float | None = None,
                    mask: CanalMask | None = None) -> PlannedPath:
    """Smooth a pixel path and resample it into ``n`` stations, in mm.

    With ``mask`` the image-centred frame is used; otherwise pixels are just
    scaled by ``pixel_size`` with x = col and y = row.
    """
    pix = np.asarray(pixel_path, dtype=np.float64)
    if len(pix) < 2:
        raise ValueError("path needs at least two pixels")
    smooth = moving_average(pix, window)
    if mask is not None:
        mm = mask.px_to_mm(smooth)
    else:
        mm = smooth[:, ::-1] * (pixel_size if pixel_size is not None else PIXEL_SIZE_MM)
    wp, _ = resample_arclength(mm, n)
    total = float(np.sum(np.linalg.norm(np.diff(wp, axis=0), axis=1)))
    return PlannedPath(waypoints=wp, total_length=total, pixel_path=np.asarray(pixel_path))


class ReferenceTrajectory:
    """Constant-speed walk along the waypoint polyline, clamped at the end."""

    def __init__(self, waypoints, speed: float = 0.5):
        if not speed > 0:
            raise ValueError("speed must be positive")
        self.waypoints = np.asarray(waypoints, dtype=np.float64)
        self.speed = float(speed)
        seg = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        self._s = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self._s[-1])

    @property
    def duration(self) -> float:
        return self.length / self.speed

    def _segment(self, s):
        k = int(np.searchsorted(self._s, s, side="right") - 1)
        return min(max(k, 0), len(self.waypoints) - 2)

    def position(self, t: float) -> np.ndarray:
        s = min(max(t, 0.0) * self.speed, self.length)
        return np.array([np.interp(s, self._s, self.waypoints[:, 0]),
                         np.interp(s, self._s, self.waypoints[:, 1])])

    def tangent(self, t: float) -> np.ndarray:
        s = min(max(t, 0.0) * self.speed, self.length)
        k = self._segment(s)
        d = self.waypoints[k + 1] - self.waypoints[k]
        n = np.linalg.norm(d)
        return d / n if n > 0 else np.array([1.0, 0.0])

    def velocity(self, t: float) -> np.ndarray:
        if t < 0 or t * self.speed >= self.length:
            return np.zeros(2)
        return self.speed * self.tangent(t)


def reference_trajectory(path: PlannedPath, speed: float = 0.5) -> ReferenceTrajectory:
    return ReferenceTrajectory(path.waypoints, speed)


def plan(mask: CanalMask, start_mm, goal_mm, min_clearance=5.0, w_clear=0.5, window=7, n=10):
    """Full pipeline from a mask and two points in mm to a PlannedPath."""
    clearance = distance_transform(mask)
    cm = build_cost_map(clearance, min_clearance, w_clear, navigable=mask.pixels)
    s = project_to_feasible(mask.mm_to_px(start_mm), cm)
    g = project_to_feasible(mask.mm_to_px(goal_mm), cm)
    pix, _ = astar(cm, s, g)
    return smooth_resample(pix, window, n, mask=mask), cm


# --------------------------------------------------------------------------
# PGM I/O
# --------------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int, pos: int):
    toks = []
    while len(toks) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header")
        toks.append(data[start:pos])
    return toks, pos


def read_pgm(path) -> np.ndarray:
    """Grey levels of a P2 or P5 PGM as a 2-D integer array."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4, 0)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ParseError(f"{path}: malformed PGM header") from None
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        need = w * h * dtype.itemsize
        buf = data[pos:pos + need]
        if len(buf) != need:
            raise ParseError(f"{path}: expected {need} bytes of pixel data, got {len(buf)}")
        img = np.frombuffer(buf, dtype=dtype).reshape(h, w).astype(np.int64)
    elif magic == b"P2":
        try:
            vals = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise ParseError(f"{path}: non-integer pixel value") from None
        if vals.size != w * h:
            raise ParseError(f"{path}: expected {w * h} pixels, got {vals.size}")
        img = vals.reshape(h, w)
    else:
        raise ParseError(f"{path}: unsupported PGM magic {magic!r}")
    if maxval != 255:
        img = img * 255 // max(maxval, 1)
    return img


def write_pgm(path, image) -> None:
    img = np.asarray(image)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    img = np.clip(img, 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def load_mask(path, pixel_size: float = PIXEL_SIZE_MM) -> CanalMask:
    return CanalMask(read_pgm(path) >= 128, pixel_size)
