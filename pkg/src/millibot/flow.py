"""In-plane flow field on a rectilinear grid with pulsatile modulation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import GeometryError, GridError, ParseError

CSV_HEADER = ["x_mm", "y_mm", "vx_mps", "vy_mps"]

WAVEFORMS = {"constant": kernels.WAVE_CONSTANT, "rectified_sine": kernels.WAVE_RECTIFIED_SINE}


@dataclass(frozen=True)
class PulsatileProfile:
    """Time modulation g(t) in [0, 1] applied to the steady field.

    ``rectified_sine`` is |sin(2 pi f t + phase)|: it peaks at 1 and repeats
    every 1/f (its fundamental is actually 2f).
    """

    frequency: float = 3.0
    waveform: str = "rectified_sine"
    phase: float = 0.0

    def __post_init__(self):
        if self.waveform not in WAVEFORMS:
            raise ValueError(f"unknown waveform {self.waveform!r}")
        if self.waveform != "constant" and not self.frequency > 0:
            raise ValueError("frequency must be positive")

    @property
    def code(self) -> int:
        return WAVEFORMS[self.waveform]

    def g(self, t):
        if self.waveform == "constant":
            return np.ones_like(np.asarray(t, dtype=np.float64)) if np.ndim(t) else 1.0
        return np.abs(np.sin(2.0 * np.pi * self.frequency * np.asarray(t, dtype=np.float64) + self.phase))

    def mean(self) -> float:
        return 1.0 if self.waveform == "constant" else 2.0 / math.pi


CONSTANT = PulsatileProfile(waveform="constant")


@dataclass(frozen=True)
class FlowGrid:
    origin: np.ndarray  # mm, coordinates of node [0, 0]
    spacing: float  # mm
    vx: np.ndarray  # (ny, nx) m/s
    vy: np.ndarray
    domain_mask: np.ndarray  # (ny, nx) bool, True inside the lumen

    def __post_init__(self):
        vx = np.ascontiguousarray(self.vx, dtype=np.float64)
        vy = np.ascontiguousarray(self.vy, dtype=np.float64)
        mask = np.ascontiguousarray(self.domain_mask, dtype=bool)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(2))
        object.__setattr__(self, "vx", vx)
        object.__setattr__(self, "vy", vy)
        object.__setattr__(self, "domain_mask", mask)
        if not self.spacing > 0:
            raise GridError("spacing must be positive")
        if vx.shape != vy.shape or vx.shape != mask.shape or vx.ndim != 2:
            raise GridError(f"inconsistent shapes {vx.shape}, {vy.shape}, {mask.shape}")
        if vx.shape[0] < 2 or vx.shape[1] < 2:
            raise GridError("grid needs at least 2x2 nodes")
        if not (np.isfinite(vx).all() and np.isfinite(vy).all()):
            raise GridError("velocities must be finite")
        if np.any(vx[~mask] != 0.0) or np.any(vy[~mask] != 0.0):
            raise GridError("velocities must be zero outside the domain mask")

    @property
    def nx(self) -> int:
        return self.vx.shape[1]

    @property
    def ny(self) -> int:
        return self.vx.shape[0]

    @property
    def xs(self) -> np.ndarray:
        return self.origin[0] + self.spacing * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + self.spacing * np.arange(self.ny)

    def speed(self) -> np.ndarray:
        return np.hypot(self.vx, self.vy)

    def scaled(self, alpha: float) -> "FlowGrid":
        return FlowGrid(self.origin, self.spacing, alpha * self.vx, alpha * self.vy, self.domain_mask)

    @classmethod
    def zeros(cls, origin=(-46.0, -46.0), spacing=1.0, shape=(93, 93)) -> "FlowGrid":
        return cls(origin, spacing, np.zeros(shape), np.zeros(shape), np.ones(shape, dtype=bool))


def sample_flow(grid: FlowGrid, profile: PulsatileProfile, point, t: float):
    """Velocity (m/s) at ``point`` (mm) and time ``t`` (s), plus an inside flag."""
    ux, uy, inside = kernels.bilinear(grid.vx, grid.vy, grid.domain_mask, grid.origin[0], grid.origin[1],
                                      grid.spacing, float(point[0]), float(point[1]))
    if not inside:
        return np.zeros(2), False
    g = kernels.modulation(float(t), profile.frequency, profile.phase, profile.code)
    return np.array([ux * g, uy * g]), True


def sample_mean_flow(grid: FlowGrid, profile: PulsatileProfile, point):
    """Time-averaged velocity at ``point``: the steady field times mean g."""
    ux, uy, inside = kernels.bilinear(grid.vx, grid.vy, grid.domain_mask, grid.origin[0], grid.origin[1],
                                      grid.spacing, float(point[0]), float(point[1]))
    m = profile.mean()
    return np.array([ux * m, uy * m]), bool(inside)


# --------------------------------------------------------------------------
# synthetic two-inlet field
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Port:
    mouth: tuple  # mm, where the channel opens into the chamber
    direction: tuple  # unit vector of the flow at the mouth
    width: float = 3.0  # mm
    strength: float = 1.0  # relative centreline speed at the mouth


@dataclass(frozen=True)
class SynthGeometry:
    """Grid placement, lumen mask on the grid nodes, inlets and outlet."""

    origin: tuple
    spacing: float
    lumen: np.ndarray  # (ny, nx) bool
    inlets: Sequence[Port]
    outlet: Port
    decay_length: float = 10.0  # mm, centreline speed halves to 1/sqrt(2) here
    spread_rate: float = 0.12  # jet half-width growth per mm
    outlet_strength: float = 0.5


def _jet(px, py, port: Port, decay_length, spread_rate):
    d = np.asarray(port.direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    n = np.array([-d[1], d[0]])
    rx = px - port.mouth[0]
    ry = py - port.mouth[1]
    xi = rx * d[0] + ry * d[1]
    eta = rx * n[0] + ry * n[1]
    half = port.width / 2.0
    b = np.where(xi > 0, half + spread_rate * xi, half)
    centre = np.where(xi > 0, 1.0 / np.sqrt(1.0 + np.maximum(xi, 0.0) / decay_length), 1.0)
    amp = port.strength * centre * np.clip(1.0 - (eta / b) ** 2, 0.0, None)
    return amp * d[0], amp * d[1]


def synth_two_inlet_flow(peak_speed: float, geometry: SynthGeometry) -> FlowGrid:
    """Two decaying planar jets converging in a chamber with one outlet.

    The result is tangent to the lumen wall and rescaled so the largest node
    speed equals ``peak_speed`` (m/s).
    """
    if not peak_speed > 0:
        raise ValueError("peak_speed must be positive")
    lumen = np.asarray(geometry.lumen, dtype=bool)
    ny, nx = lumen.shape
    x0, y0 = geometry.origin
    h = geometry.spacing
    xmax = x0 + h * (nx - 1)
    ymax = y0 + h * (ny - 1)
    for port in list(geometry.inlets) + [geometry.outlet]:
        mx, my = port.mouth
        if not (x0 <= mx <= xmax and y0 <= my <= ymax):
            raise GeometryError(f"port at {port.mouth} lies outside the grid")
    if len(geometry.inlets) != 2:
        raise GeometryError("expected exactly two inlets")

    X, Y = np.meshgrid(x0 + h * np.arange(nx), y0 + h * np.arange(ny))
    vx = np.zeros((ny, nx))
    vy = np.zeros((ny, nx))
    for port in geometry.inlets:
        jx, jy = _jet(X, Y, port, geometry.decay_length, geometry.spread_rate)
        vx += jx
        vy += jy
    # outlet: a sink drawing fluid into the outlet channel; inside the channel
    # (xi > 0) it is a plain channel profile.
    out = geometry.outlet
    ox, oy = _jet(X, Y, out, geometry.decay_length, 0.0)
    d = np.asarray(out.direction, dtype=np.float64) / np.linalg.norm(out.direction)
    rx, ry = X - out.mouth[0], Y - out.mouth[1]
    xi = rx * d[0] + ry * d[1]
    dist = np.hypot(rx, ry)
    inward = np.where(xi < 0, 1.0 / (1.0 + dist / geometry.decay_length), 0.0)
    ux = np.where(dist > 0, -rx / np.where(dist > 0, dist, 1.0), 0.0)
    uy = np.where(dist > 0, -ry / np.where(dist > 0, dist, 1.0), 0.0)
    vx += geometry.outlet_strength * (np.where(xi >= 0, ox, 0.0) + inward * ux)
    vy += geometry.outlet_strength * (np.where(xi >= 0, oy, 0.0) + inward * uy)

    vx[~lumen] = 0.0
    vy[~lumen] = 0.0
    _make_wall_tangent(vx, vy, lumen)

    peak = float(np.max(np.hypot(vx, vy)))
    if not peak > 0:
        raise GeometryError("synthetic field is identically zero inside the lumen")
    s = peak_speed / peak
    return FlowGrid((x0, y0), h, vx * s, vy * s, lumen)


def _make_wall_tangent(vx, vy, lumen):
    """Remove the wall-normal component on lumen nodes that touch the wall."""
    d = np.sqrt(kernels.edt_sq(np.pad(lumen, 1)))[1:-1, 1:-1]
    gy, gx = np.gradient(d)
    wall = np.zeros_like(lumen)
    wall[:-1, :] |= ~lumen[1:, :]
    wall[1:, :] |= ~lumen[:-1, :]
    wall[:, :-1] |= ~lumen[:, 1:]
    wall[:, 1:] |= ~lumen[:, :-1]
    wall &= lumen
    norm = np.hypot(gx, gy)
    ok = wall & (norm > 0)
    nx_ = np.where(ok, gx / np.where(norm > 0, norm, 1.0), 0.0)
    ny_ = np.where(ok, gy / np.where(norm > 0, norm, 1.0), 0.0)
    vn = vx * nx_ + vy * ny_
    vx -= np.where(ok, vn * nx_, 0.0)
    vy -= np.where(ok, vn * ny_, 0.0)


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def save_flow_csv(grid: FlowGrid, path) -> None:
    """Write one row per node, y outer and x inner; nodes outside the lumen get nan."""
    xs, ys = grid.xs, grid.ys
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for j in range(grid.ny):
            for i in range(grid.nx):
                if grid.domain_mask[j, i]:
                    u, v = repr(float(grid.vx[j, i])), repr(float(grid.vy[j, i]))
                else:
                    u = v = "nan"
                fh.write(f"{float(xs[i])!r},{float(ys[j])!r},{u},{v}\n")


def load_flow_csv(path) -> FlowGrid:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value in {row}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.array(rows)
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    if xs.size < 2 or ys.size < 2:
        raise GridError(f"{path}: need at least 2 distinct x and y coordinates")
    h = _uniform_spacing(xs, "x", path)
    hy = _uniform_spacing(ys, "y", path)
    if abs(h - hy) > 1e-6 * h:
        raise GridError(f"{path}: x spacing {h} differs from y spacing {hy}")
    if data.shape[0] != xs.size * ys.size:
        raise GridError(f"{path}: {data.shape[0]} rows for a {xs.size}x{ys.size} grid")
    ii = np.searchsorted(xs, data[:, 0])
    jj = np.searchsorted(ys, data[:, 1])
    vx = np.zeros((ys.size, xs.size))
    vy = np.zeros((ys.size, xs.size))
    mask = np.zeros((ys.size, xs.size), dtype=bool)
    seen = np.zeros_like(mask)
    seen[jj, ii] = True
    if not seen.all():
        raise GridError(f"{path}: duplicate or missing nodes")
    inside = ~(np.isnan(data[:, 2]) | np.isnan(data[:, 3]))
    vx[jj[inside], ii[inside]] = data[inside, 2]
    vy[jj[inside], ii[inside]] = data[inside, 3]
    mask[jj, ii] = inside
    return FlowGrid((xs[0], ys[0]), h, vx, vy, mask)


def _uniform_spacing(vals, name, path) -> float:
    d = np.diff(vals)
    h = (vals[-1] - vals[0]) / (vals.size - 1)
    if np.max(np.abs(d - h)) > 1e-6 * abs(h):
        raise GridError(f"{path}: non-uniform {name} spacing")
    return float(h)


@dataclass(frozen=True)
class FlowField:
    """A steady grid together with its pulsatile time modulation."""

    grid: FlowGrid
    profile: PulsatileProfile = CONSTANT

    def sample(self, point_mm, t: float):
        return sample_flow(self.grid, self.profile, point_mm, t)

    def sample_mean(self, point_mm):
        return sample_mean_flow(self.grid, self.profile, point_mm)
