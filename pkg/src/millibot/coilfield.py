"""Planar coil field model, actuation matrix and current allocation.

Each coil is modelled as a point magnetic dipole at its centre whose moment
per ampere is ``calibration_gain * loop_radius**2 / 4`` along the coil axis
(the far field of a circular loop with ``calibration_gain = mu0 * turns``).
The field is linear in current, curl-free in the plane and has a closed-form
gradient.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CalibrationError, ConfigError, SingularityError

log = logging.getLogger(__name__)

MU0 = 4e-7 * np.pi

#: Peak flux density and gradient of the reference activation (two coils of
#: one unit driven together).
REFERENCE_PEAK_FLUX_T = 24.05e-3
REFERENCE_PEAK_GRADIENT_T_PER_M = 1.392  # 13.92 mT/cm

WORKSPACE_HALF_WIDTH_M = 0.05
UNIT_HALF_WIDTH_M = 0.11
LARGE_RADIUS_M = 0.05
SMALL_RADIUS_M = 0.02
DEFAULT_TURNS = 200
DEFAULT_REFERENCE_CURRENT_A = 10.0


@dataclass(frozen=True)
class CoilModel:
    center: np.ndarray
    axis: np.ndarray
    loop_radius: float
    calibration_gain: float
    max_current: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(2)
        axis = np.asarray(self.axis, dtype=np.float64).reshape(2)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "axis", axis)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError(f"coil axis must be a unit vector, got {axis}")
        if not (self.loop_radius > 0 and self.calibration_gain > 0 and self.max_current > 0):
            raise ValueError("loop_radius, calibration_gain and max_current must be positive")

    @property
    def moment_per_amp(self) -> float:
        """Equivalent dipole strength per ampere, already divided by 4 pi."""
        return self.calibration_gain * self.loop_radius**2 / 4.0

    def to_dict(self) -> dict:
        return {
            "center_m": [float(v) for v in self.center],
            "axis": [float(v) for v in self.axis],
            "loop_radius_m": float(self.loop_radius),
            "calibration_gain": float(self.calibration_gain),
            "max_current_a": float(self.max_current),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoilModel":
        try:
            return cls(
                center=d["center_m"],
                axis=d["axis"],
                loop_radius=float(d["loop_radius_m"]),
                calibration_gain=float(d["calibration_gain"]),
                max_current=float(d["max_current_a"]),
            )
        except KeyError as exc:
            raise ConfigError(f"coil entry missing field {exc}") from None


@dataclass(frozen=True)
class FieldSample:
    """Flux density ``B`` (T) and gradient ``grad[i, j] = dB_i/dx_j`` (T/m)."""

    B: np.ndarray
    grad: np.ndarray


@dataclass(frozen=True)
class ActuationMatrix:
    """4x8 map from coil currents to [F_x, F_y, omega_o*B_x, omega_o*B_y]."""

    A: np.ndarray
    omega_o: float = 1.0

    def apply(self, currents) -> np.ndarray:
        return self.A @ np.asarray(currents, dtype=np.float64)


@dataclass(frozen=True)
class ReferenceActivation:
    coils: tuple = (0, 1)
    current: float = DEFAULT_REFERENCE_CURRENT_A


@dataclass(frozen=True)
class CoilLayout:
    coils: tuple
    omega_o: float = 1.0
    reference: ReferenceActivation = field(default_factory=ReferenceActivation)

    def __post_init__(self):
        object.__setattr__(self, "coils", tuple(self.coils))
        if len(self.coils) != 8:
            raise ConfigError(f"expected 8 coils, got {len(self.coils)}")

    @property
    def max_current(self) -> float:
        return min(c.max_current for c in self.coils)

    def to_dict(self) -> dict:
        return {
            "coils": [c.to_dict() for c in self.coils],
            "omega_o": float(self.omega_o),
            "reference_activation": {
                "coils": list(self.reference.coils),
                "current_a": float(self.reference.current),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoilLayout":
        if isinstance(d, list):
            d = {"coils": d}
        ref = d.get("reference_activation") or {}
        return cls(
            coils=tuple(CoilModel.from_dict(c) for c in d["coils"]),
            omega_o=float(d.get("omega_o", 1.0)),
            reference=ReferenceActivation(
                coils=tuple(ref.get("coils", (0, 1))),
                current=float(ref.get("current_a", DEFAULT_REFERENCE_CURRENT_A)),
            ),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CoilLayout":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_layout(calibrated: bool = True) -> CoilLayout:
    """Four units (N, S, E, W) on a square around the workspace, axes inward.

    Coil order: N-large, N-small, S-large, S-small, E-large, E-small, W-large,
    W-small.  With ``calibrated`` the shared gain is fitted to the reference
    activation of the north pair.
    """
    units = [
        ((0.0, UNIT_HALF_WIDTH_M), (0.0, -1.0)),
        ((0.0, -UNIT_HALF_WIDTH_M), (0.0, 1.0)),
        ((UNIT_HALF_WIDTH_M, 0.0), (-1.0, 0.0)),
        ((-UNIT_HALF_WIDTH_M, 0.0), (1.0, 0.0)),
    ]
    coils = []
    for center, axis in units:
        for radius in (LARGE_RADIUS_M, SMALL_RADIUS_M):
            coils.append(CoilModel(center, axis, radius, MU0 * DEFAULT_TURNS, DEFAULT_REFERENCE_CURRENT_A))
    layout = CoilLayout(tuple(coils))
    if calibrated:
        layout = calibrate(layout).layout
    return layout


# --------------------------------------------------------------------------
# field evaluation
# --------------------------------------------------------------------------

def _dipole_field(centers, axes, strength, point):
    """Field and gradient of several dipoles at one point, per unit current.

    centers, axes: (n, 2); strength: (n,).  Returns B (n, 2), grad (n, 2, 2).
    """
    r = np.asarray(point, dtype=np.float64) - centers
    rho2 = np.einsum("ij,ij->i", r, r)
    rho = np.sqrt(rho2)
    inv3 = 1.0 / (rho2 * rho)
    inv5 = inv3 / rho2
    inv7 = inv5 / rho2
    nr = np.einsum("ij,ij->i", axes, r)
    k = strength[:, None]
    B = k * (3.0 * (nr * inv5)[:, None] * r - inv3[:, None] * axes)
    eye = np.eye(2)
    rr = r[:, :, None] * r[:, None, :]
    nr_outer = r[:, :, None] * axes[:, None, :] + axes[:, :, None] * r[:, None, :]
    grad = strength[:, None, None] * (
        3.0 * inv5[:, None, None] * (nr_outer + nr[:, None, None] * eye)
        - 15.0 * (nr * inv7)[:, None, None] * rr
    )
    return B, grad


def _check_singular(coil: CoilModel, point) -> None:
    if np.linalg.norm(np.asarray(point, dtype=np.float64) - coil.center) < coil.loop_radius / 100.0:
        raise SingularityError(
            f"point {np.asarray(point).tolist()} within loop_radius/100 of coil centre {coil.center.tolist()}"
        )


def unit_field(coil: CoilModel, point) -> FieldSample:
    """Field of ``coil`` at ``point`` (m) for a 1 A current."""
    _check_singular(coil, point)
    B, grad = _dipole_field(coil.center[None, :], coil.axis[None, :], np.array([coil.moment_per_amp]), point)
    return FieldSample(B=B[0], grad=grad[0])


def unit_fields(coils: Sequence[CoilModel], point):
    """Stacked unit-current samples of all coils: B (n, 2), grad (n, 2, 2)."""
    for c in coils:
        _check_singular(c, point)
    centers = np.array([c.center for c in coils])
    axes = np.array([c.axis for c in coils])
    strength = np.array([c.moment_per_amp for c in coils])
    return _dipole_field(centers, axes, strength, point)


def field_grid(coils: Sequence[CoilModel], currents, xs, ys):
    """Superposed B and grad on a meshgrid; returns B (ny, nx, 2), grad (ny, nx, 2, 2)."""
    currents = np.asarray(currents, dtype=np.float64)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    B = np.zeros((pts.shape[0], 2))
    G = np.zeros((pts.shape[0], 2, 2))
    for coil, cur in zip(coils, currents):
        if cur == 0.0:
            continue
        r = pts - coil.center
        rho2 = np.einsum("ij,ij->i", r, r)
        rho = np.sqrt(rho2)
        inv3 = 1.0 / (rho2 * rho)
        inv5 = inv3 / rho2
        inv7 = inv5 / rho2
        n = coil.axis
        nr = r @ n
        k = coil.moment_per_amp * cur
        B += k * (3.0 * (nr * inv5)[:, None] * r - inv3[:, None] * n)
        rr = r[:, :, None] * r[:, None, :]
        nro = r[:, :, None] * n[None, None, :] + n[None, :, None] * r[:, None, :]
        G += k * (3.0 * inv5[:, None, None] * (nro + nr[:, None, None] * np.eye(2))
                  - 15.0 * (nr * inv7)[:, None, None] * rr)
    shape = X.shape
    return B.reshape(shape + (2,)), G.reshape(shape + (2, 2))


def force_torque(dipole, sample: FieldSample):
    """Force F_j = sum_k m_k dB_k/dx_j (N) and in-plane torque m x B (N m)."""
    m = np.asarray(dipole, dtype=np.float64)
    force = sample.grad.T @ m
    torque = m[0] * sample.B[1] - m[1] * sample.B[0]
    return force, float(torque)


# --------------------------------------------------------------------------
# actuation matrix and allocation
# --------------------------------------------------------------------------

def assemble_actuation_matrix(coils: Sequence[CoilModel], dipole, point, omega_o: float = 1.0) -> ActuationMatrix:
    if len(coils) != 8:
        raise ConfigError(f"expected 8 coils, got {len(coils)}")
    m = np.asarray(dipole, dtype=np.float64)
    B, grad = unit_fields(coils, point)
    A = np.empty((4, 8))
    # column i: grad_i^T m, then omega_o * B_i
    A[0:2, :] = np.einsum("nij,i->jn", grad, m)
    A[2:4, :] = omega_o * B.T
    return ActuationMatrix(A=A, omega_o=omega_o)


RCOND = 1e-10


def pseudo_inverse_solve(A, C) -> np.ndarray:
    """Minimal-norm least-squares I = W Sigma^+ U^T C with a relative cutoff."""
    U, sig, Wt = np.linalg.svd(np.asarray(A, dtype=np.float64), full_matrices=False)
    keep = sig > RCOND * (sig[0] if sig.size else 0.0)
    inv = np.zeros_like(sig)
    inv[keep] = 1.0 / sig[keep]
    return Wt.T @ (inv * (U.T @ np.asarray(C, dtype=np.float64)))


def allocate_currents(A, C, i_max: float):
    """Coil currents for control vector ``C``; returns (currents, saturated).

    If any current exceeds ``i_max`` the whole vector is scaled down
    uniformly, preserving the commanded direction.
    """
    if i_max <= 0:
        raise ValueError("i_max must be positive")
    mat = A.A if isinstance(A, ActuationMatrix) else A
    I = pseudo_inverse_solve(mat, C)
    peak = float(np.max(np.abs(I))) if I.size else 0.0
    if peak > i_max:
        return I * (i_max / peak), True
    return I, False


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationReport:
    layout: CoilLayout
    scale: float
    peak_flux_t: float
    peak_gradient_t_per_m: float
    peak_flux_location_m: tuple

    @property
    def peak_gradient_mt_per_cm(self) -> float:
        return self.peak_gradient_t_per_m * 10.0


def workspace_peaks(coils, currents, half_width=WORKSPACE_HALF_WIDTH_M, step=1e-3):
    """Peak |B| and peak |grad |B|| over the square workspace grid."""
    n = int(round(2 * half_width / step)) + 1
    xs = np.linspace(-half_width, half_width, n)
    B, G = field_grid(coils, currents, xs, xs)
    mag = np.linalg.norm(B, axis=-1)
    unit = B / np.where(mag > 0, mag, 1.0)[..., None]
    grad_mag = np.einsum("...i,...ij->...j", unit, G)
    gnorm = np.linalg.norm(grad_mag, axis=-1)
    iy, ix = np.unravel_index(np.argmax(mag), mag.shape)
    return float(mag.max()), float(gnorm.max()), (float(xs[ix]), float(xs[iy]))


def calibrate(layout: CoilLayout, reference: ReferenceActivation | None = None,
              target_flux: float = REFERENCE_PEAK_FLUX_T,
              gain_bounds: tuple = (1e-9, 1e-1)) -> CalibrationReport:
    """Scale every coil gain by one shared factor so the reference activation
    peaks at ``target_flux`` inside the workspace."""
    ref = reference or layout.reference
    currents = np.zeros(len(layout.coils))
    for idx in ref.coils:
        currents[idx] = ref.current
    peak, _, _ = workspace_peaks(layout.coils, currents)
    if not peak > 0:
        raise CalibrationError("reference activation produces no field in the workspace")
    scale = target_flux / peak
    lo, hi = gain_bounds
    coils = []
    for c in layout.coils:
        g = c.calibration_gain * scale
        if not lo <= g <= hi:
            raise CalibrationError(f"calibrated gain {g:.3e} outside bounds [{lo:.1e}, {hi:.1e}]")
        coils.append(replace(c, calibration_gain=g))
    new = replace(layout, coils=tuple(coils), reference=ref)
    peak, grad, loc = workspace_peaks(new.coils, currents)
    log.info("calibrated: peak flux %.4f mT, peak gradient %.2f mT/cm (reference %.2f)",
             peak * 1e3, grad * 10.0, REFERENCE_PEAK_GRADIENT_T_PER_M * 10.0)
    return CalibrationReport(layout=new, scale=scale, peak_flux_t=peak,
                             peak_gradient_t_per_m=grad, peak_flux_location_m=loc)
