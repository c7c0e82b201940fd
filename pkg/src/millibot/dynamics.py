"""Planar point-mass robot in a viscous, possibly moving, fluid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError
from .flow import FlowField

CENTIPOISE = 1e-3  # Pa s


def drag_coefficient(mu: float, L: float, r: float) -> float:
    """Translational damping of a slender ellipsoid, 2 pi mu L / ln(L/r)."""
    if not (L > r > 0):
        raise DomainError(f"need L > r > 0, got L={L}, r={r}")
    if not mu > 0:
        raise DomainError(f"viscosity must be positive, got {mu}")
    return 2.0 * math.pi * mu * L / math.log(L / r)


def drag_force(c_t: float, v_robot, v_flow) -> np.ndarray:
    """Drag on the robot, c_t (v_flow - v_robot)."""
    return c_t * (np.asarray(v_flow, dtype=np.float64) - np.asarray(v_robot, dtype=np.float64))


@dataclass(frozen=True)
class RobotParams:
    mass: float = 5.0e-5  # kg
    length: float = 7.4e-3  # m
    radius: float = 1.4e-3  # m
    dipole_moment: float = 8.60e-4  # A m^2
    c_t_override: float | None = None

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not (self.length > self.radius > 0):
            raise ValueError("need length > radius > 0")
        if not self.dipole_moment > 0:
            raise ValueError("dipole_moment must be positive")

    def c_t(self, viscosity_cp: float) -> float:
        if self.c_t_override is not None:
            return float(self.c_t_override)
        return drag_coefficient(viscosity_cp * CENTIPOISE, self.length, self.radius)

    def dipole(self, heading: float) -> np.ndarray:
        return self.dipole_moment * np.array([math.cos(heading), math.sin(heading)])

    def to_dict(self) -> dict:
        return {"mass": self.mass, "length": self.length, "radius": self.radius,
                "dipole_moment": self.dipole_moment, "c_t_override": self.c_t_override}


@dataclass(frozen=True)
class RobotState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(2))  # m
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))  # m/s
    heading: float = 0.0  # rad
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(2))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=np.float64).reshape(2))


MAX_SUBSTEP = 1e-3


def substep_count(dt: float, mass: float, c_t: float, max_substep: float = MAX_SUBSTEP) -> int:
    h = min(max_substep, mass / (10.0 * c_t)) if c_t > 0 else max_substep
    return max(1, int(math.ceil(dt / h - 1e-9)))


def step(state: RobotState, F_applied, B_applied, flow: FlowField | None, params: RobotParams,
         dt: float, c_t: float, max_substep: float = MAX_SUBSTEP) -> RobotState:
    """Advance ``dt`` seconds with the force held, by semi-implicit Euler substeps.

    ``c_t`` is the true drag coefficient of the fluid.  The heading snaps to
    the applied field whenever that field is nonzero.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = substep_count(dt, params.mass, c_t, max_substep)
    h = dt / n
    F = np.asarray(F_applied, dtype=np.float64)
    if flow is None:
        grid = None
        args = (False, _EMPTY, _EMPTY, _EMPTY_MASK, 0.0, 0.0, 1.0, 0.0, 0.0, kernels.WAVE_CONSTANT)
    else:
        grid = flow.grid
        args = (True, grid.vx, grid.vy, grid.domain_mask, float(grid.origin[0]), float(grid.origin[1]),
                float(grid.spacing), float(flow.profile.frequency), float(flow.profile.phase), flow.profile.code)
    x, y, vx, vy = kernels.integrate(float(state.position[0]), float(state.position[1]),
                                     float(state.velocity[0]), float(state.velocity[1]),
                                     float(F[0]), float(F[1]), float(params.mass), float(c_t),
                                     h, n, float(state.t), *args)
    B = np.asarray(B_applied, dtype=np.float64)
    heading = math.atan2(B[1], B[0]) if np.hypot(B[0], B[1]) > 0 else state.heading
    return RobotState(np.array([x, y]), np.array([vx, vy]), heading, state.t + dt)


_EMPTY = np.zeros((2, 2))
_EMPTY_MASK = np.zeros((2, 2), dtype=bool)
