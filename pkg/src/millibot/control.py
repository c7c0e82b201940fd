"""Planar force controllers: sliding mode with disturbance observer, PID, MPC.

All quantities are SI (m, m/s, N).  Errors are reference minus measured,
e = x_d - x, so positive gains push toward the reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import SolveError

REFERENCE_VISCOSITY_CP = 20.0

# The hardware gains are quoted for a system whose effective force scale is
# not recoverable; in the simulated 10 Hz Stokes-drag plant they make the
# sampled loop unstable (K dt / c_t >> 2).  Force-valued gains are therefore
# multiplied by these factors, which keep the ratios between gain sets.
PID_FORCE_SCALE = 0.01
SMC_FORCE_SCALE = 0.0135


def _diag(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim == 0:
        return np.full(2, float(a))
    if a.ndim == 2:
        return np.diag(a).copy()
    return a.reshape(2).copy()


def unit_heading(theta: float) -> np.ndarray:
    """Unit field direction for a heading angle, [sin theta, cos theta]."""
    return np.array([math.sin(theta), math.cos(theta)])


@dataclass(frozen=True)
class ControlOutput:
    F_des: np.ndarray
    B_dir: np.ndarray
    diagnostics: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# sliding mode control with disturbance observer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SmcGains:
    gamma: float = 2.0
    lam: float = 1.0
    K1: np.ndarray = 2.0  # 1/s, diagonal
    K2: np.ndarray = 1.0  # 1/s^2
    K3: np.ndarray = 1.0
    K4: float = 2.0e-4 * SMC_FORCE_SCALE  # N
    eta: float = 6.0e-2  # s
    phi: float = 9.0e-3  # m
    Wp: np.ndarray = 1.0
    Wr: np.ndarray = 1.0

    def __post_init__(self):
        for name in ("K1", "K2", "K3", "Wp", "Wr"):
            object.__setattr__(self, name, _diag(getattr(self, name)))
        if not (self.gamma > 0 and self.lam > 0 and self.K4 > 0 and self.eta > 0 and self.phi > 0):
            raise ValueError("gamma, lambda, K4, eta and phi must be positive")
        if np.any(self.K1 <= 0) or np.any(self.K2 <= 0) or np.any(self.K3 <= 0):
            raise ValueError("K1, K2, K3 must be positive")
        if np.any(self.Wp < 0) or np.any(self.Wr < 0):
            raise ValueError("Wp, Wr must be non-negative")

    @classmethod
    def static_defaults(cls, viscosity_cp: float = REFERENCE_VISCOSITY_CP) -> "SmcGains":
        k = viscosity_cp / REFERENCE_VISCOSITY_CP
        return cls(K1=2.0 * k, K2=1.0 * k, K3=1.0 * k)

    @classmethod
    def flow_defaults(cls, viscosity_cp: float = REFERENCE_VISCOSITY_CP) -> "SmcGains":
        k = viscosity_cp / REFERENCE_VISCOSITY_CP
        return cls(K1=2.0 * k, K2=1.0 * k, K3=1.0 * k, K4=3.0e-4 * SMC_FORCE_SCALE, eta=12.0e-2, phi=18.0e-3)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "lambda": self.lam, "K1": self.K1.tolist(), "K2": self.K2.tolist(),
                "K3": self.K3.tolist(), "K4": self.K4, "eta": self.eta, "phi": self.phi,
                "Wp": self.Wp.tolist(), "Wr": self.Wr.tolist()}

    @classmethod
    def from_dict(cls, d: dict, base: "SmcGains | None" = None) -> "SmcGains":
        base = base or cls()
        kw = {}
        for key, val in d.items():
            name = "lam" if key == "lambda" else key
            if name not in cls.__dataclass_fields__:
                raise KeyError(f"unknown SMC gain {key!r}")
            kw[name] = val
        return replace(base, **kw)


@dataclass(frozen=True)
class DobState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(2))
    r: np.ndarray = field(default_factory=lambda: np.zeros(2))
    F_prev: np.ndarray = field(default_factory=lambda: np.zeros(2))


def sliding_surface(e, e_dot, gamma: float, lam: float) -> np.ndarray:
    return gamma * np.asarray(e_dot, dtype=np.float64) + lam * np.asarray(e, dtype=np.float64)


def drag_model(c_t, v_robot, v_flow, flow_sign: float = 1.0) -> np.ndarray:
    """Controller-side drag term c_t (x_dot + V)."""
    return c_t * (np.asarray(v_robot, dtype=np.float64) + flow_sign * np.asarray(v_flow, dtype=np.float64))


def dob_update(dob: DobState, e_dot, F_prev, v_robot, v_flow, c_t, mass, eta, Wp, Wr, dt,
               flow_sign: float = 1.0):
    """Advance both observer filters by ``dt`` (exact for held inputs) and
    return (new state, d_hat).

    d_hat = m/eta Wp (p - e_dot) - c_t (x_dot + V) - r estimates the external
    force acting on the robot; the controller subtracts it.
    """
    e_dot = np.asarray(e_dot, dtype=np.float64)
    F_prev = np.asarray(F_prev, dtype=np.float64)
    Wp = _diag(Wp)
    Wr = _diag(Wr)
    ap = np.exp(-Wp * dt / eta)
    ar = np.exp(-Wr * dt / eta)
    p = dob.p + (1.0 - ap) * (e_dot - dob.p)
    r = dob.r + (1.0 - ar) * (F_prev - dob.r)
    d_hat = mass / eta * Wp * (p - e_dot) - drag_model(c_t, v_robot, v_flow, flow_sign) - r
    return DobState(p=p, r=r, F_prev=F_prev), d_hat


def switching_term(s, K4: float, phi: float) -> np.ndarray:
    return K4 * np.tanh(np.asarray(s, dtype=np.float64) / phi)


def smc_dob_step(e, e_dot, v_robot, dob: DobState, gains: SmcGains, v_flow, c_t, mass, dt,
                 tangent=(1.0, 0.0), xdd_d=(0.0, 0.0), use_dob: bool = True, flow_sign: float = 1.0):
    """One SMC-DOB update; returns (ControlOutput, DobState).

    ``dob.F_prev`` must hold the force applied over the previous interval.
    The returned state carries F_des as its F_prev; the harness overwrites it
    with the force the coils actually produced.
    """
    e = np.asarray(e, dtype=np.float64)
    e_dot = np.asarray(e_dot, dtype=np.float64)
    s = sliding_surface(e, e_dot, gains.gamma, gains.lam)
    if use_dob:
        new, d_hat = dob_update(dob, e_dot, dob.F_prev, v_robot, v_flow, c_t, mass, gains.eta,
                                gains.Wp, gains.Wr, dt, flow_sign)
    else:
        new, d_hat = dob, np.zeros(2)
    u_eq = (mass * (gains.K1 * e_dot + gains.K2 * e) / gains.K3 + mass * np.asarray(xdd_d, dtype=np.float64)
            - drag_model(c_t, v_robot, v_flow, flow_sign))
    u_sw = switching_term(s, gains.K4, gains.phi)
    F = -d_hat + u_eq + u_sw
    t = np.asarray(tangent, dtype=np.float64)
    theta = math.atan2(t[0], t[1])
    out = ControlOutput(F, unit_heading(theta), {"s": s, "d_hat": d_hat, "u_eq": u_eq, "u_sw": u_sw})
    return out, replace(new, F_prev=F)


class SmcDobController:
    """Stateful wrapper; ``use_dob=False`` gives the ablated controller."""

    kind = "SMC_DOB"

    def __init__(self, gains: SmcGains, mass: float, c_t: float, use_dob: bool = True, flow_sign: float = 1.0):
        self.gains = gains
        self.mass = mass
        self.c_t = c_t
        self.use_dob = use_dob
        self.flow_sign = flow_sign
        self.dob = DobState()
        if not use_dob:
            self.kind = "SMC_NO_DOB"

    def step(self, ctx, gains: SmcGains | None = None) -> ControlOutput:
        g = gains or self.gains
        out, self.dob = smc_dob_step(ctx.e, ctx.e_dot, ctx.v_robot, self.dob, g, ctx.v_flow, self.c_t,
                                     self.mass, ctx.dt, ctx.tangent, use_dob=self.use_dob,
                                     flow_sign=self.flow_sign)
        return out

    def applied(self, F_applied):
        self.dob = replace(self.dob, F_prev=np.asarray(F_applied, dtype=np.float64))


# --------------------------------------------------------------------------
# PID
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PidGains:
    Kp: np.ndarray = 5e-2 * PID_FORCE_SCALE  # N/m
    Ki: np.ndarray = 5e-3 * PID_FORCE_SCALE  # N/(m s)
    Kd: np.ndarray = 8e-3 * PID_FORCE_SCALE  # N s/m
    integral_limit: float = 5e-3  # m s

    def __post_init__(self):
        for name in ("Kp", "Ki", "Kd"):
            object.__setattr__(self, name, _diag(getattr(self, name)))
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be non-negative")
        if not self.integral_limit > 0:
            raise ValueError("integral_limit must be positive")

    @classmethod
    def static_defaults(cls) -> "PidGains":
        return cls()

    @classmethod
    def flow_defaults(cls) -> "PidGains":
        return cls(Kd=2.0e-2 * PID_FORCE_SCALE)

    def to_dict(self) -> dict:
        return {"Kp": self.Kp.tolist(), "Ki": self.Ki.tolist(), "Kd": self.Kd.tolist(),
                "integral_limit": self.integral_limit}

    @classmethod
    def from_dict(cls, d: dict, base: "PidGains | None" = None) -> "PidGains":
        base = base or cls()
        for key in d:
            if key not in cls.__dataclass_fields__:
                raise KeyError(f"unknown PID gain {key!r}")
        return replace(base, **d)


@dataclass
class PidState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(2))
    e_prev: np.ndarray | None = None


def pid_step(e, e_dot, gains: PidGains, state: PidState, v_flow, c_t, heading_d: float, dt: float,
             flow_sign: float = 1.0) -> ControlOutput:
    """F = Kp e + Ki int(e) + Kd e_dot minus the flow drag feed-forward c_t V.

    The integral uses the trapezoid rule and is clamped per axis.
    """
    e = np.asarray(e, dtype=np.float64)
    prev = e if state.e_prev is None else state.e_prev
    state.integral = np.clip(state.integral + 0.5 * dt * (e + prev), -gains.integral_limit, gains.integral_limit)
    state.e_prev = e.copy()
    F_pid = gains.Kp * e + gains.Ki * state.integral + gains.Kd * np.asarray(e_dot, dtype=np.float64)
    F_d = c_t * flow_sign * np.asarray(v_flow, dtype=np.float64)
    return ControlOutput(F_pid - F_d, unit_heading(heading_d),
                         {"F_pid": F_pid, "integral": state.integral.copy(), "F_d": F_d})


class PidController:
    kind = "PID"

    def __init__(self, gains: PidGains, c_t: float, heading_d: float = math.pi / 4, flow_sign: float = 1.0):
        self.gains = gains
        self.c_t = c_t
        self.heading_d = heading_d
        self.flow_sign = flow_sign
        self.state = PidState()

    def step(self, ctx, gains=None) -> ControlOutput:
        return pid_step(ctx.e, ctx.e_dot, self.gains, self.state, ctx.v_flow, self.c_t, self.heading_d,
                        ctx.dt, self.flow_sign)

    def applied(self, F_applied):
        pass


# --------------------------------------------------------------------------
# MPC
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MpcConfig:
    """Horizon, step and weights.

    Q and P weigh position error in mm^-2 and R weighs force in uN^-2, so the
    default numbers are well scaled.
    """

    N: int = 20
    dt: float = 0.040
    Q: np.ndarray = 5e3
    R: np.ndarray = 50.0
    P: np.ndarray = 1e4

    def __post_init__(self):
        for name in ("Q", "R", "P"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.ndim < 2:
                a = np.diag(_diag(a))
            object.__setattr__(self, name, a)
        if self.N < 1 or not self.dt > 0:
            raise ValueError("need N >= 1 and dt > 0")
        if np.any(np.linalg.eigvalsh(self.R) <= 0):
            raise ValueError("R must be positive definite")
        for name in ("Q", "P"):
            if np.any(np.linalg.eigvalsh(getattr(self, name)) < -1e-12):
                raise ValueError(f"{name} must be positive semi-definite")

    def to_dict(self) -> dict:
        return {"N": self.N, "dt": self.dt, "Q": self.Q.tolist(), "R": self.R.tolist(), "P": self.P.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MpcConfig":
        return replace(cls(), **d)


MPC_LENGTH_UNIT = 1e-3  # m per error unit
MPC_FORCE_UNIT = 1e-6  # N per force unit


def discretize(c_t: float, mass: float, dt: float):
    """Exact one-step map of m v' + c_t (v - V) = F per axis, with F held and
    V varying linearly over the step.

    Returns scalars so that
      x+ = x + b0 v + bx F + (dt - b0) V0 + c2 (V1 - V0)
      v+ = a v + bv F + (1 - a) V0 + c1 (V1 - V0)
    """
    alpha = c_t / mass
    a = math.exp(-alpha * dt)
    b0 = -math.expm1(-alpha * dt) / alpha
    bx = (dt - b0) / c_t
    bv = (1.0 - a) / c_t
    c1 = 1.0 - (1.0 - a) / (alpha * dt)
    c2 = dt / 2.0 - (dt - b0) / (alpha * dt)
    return a, b0, bx, bv, c1, c2


@lru_cache(maxsize=64)
def mpc_matrices(c_t, mass, dt, N):
    """Stacked prediction of positions: X = Sx z0 + Su F + Sw w (per axis).

    Cached; callers must not modify the returned arrays.
    """
    a, b0, bx, bv, c1, c2 = discretize(c_t, mass, dt)
    A = np.array([[1.0, b0], [0.0, a]])
    B = np.array([bx, bv])
    Ak = [np.eye(2)]
    for _ in range(N):
        Ak.append(A @ Ak[-1])
    Sx = np.array([Ak[k + 1][0] for k in range(N)])  # (N, 2)
    Su = np.zeros((N, N))
    for k in range(N):
        for j in range(k + 1):
            Su[k, j] = (Ak[k - j] @ B)[0]
    return A, B, Sx, Su, (a, b0, c1, c2)


def mpc_solve(x0, v0, ref, cfg: MpcConfig, c_t: float, mass: float, v_flow=None):
    """Optimal force sequence (N, 2) for positions x0, velocities v0 (m, m/s)
    and a reference (N, 2) of positions at steps 1..N.

    ``v_flow`` is an (N+1, 2) sequence of flow samples at the step
    boundaries, or a single 2-vector held over the horizon.
    """
    N = cfg.N
    ref = np.asarray(ref, dtype=np.float64).reshape(N, 2)
    x0 = np.asarray(x0, dtype=np.float64)
    v0 = np.asarray(v0, dtype=np.float64)
    A, B, Sx, Su, (a, b0, c1, c2) = mpc_matrices(c_t, mass, cfg.dt, N)
    if v_flow is None:
        V = np.zeros((N + 1, 2))
    else:
        V = np.asarray(v_flow, dtype=np.float64)
        if V.ndim == 1:
            V = np.tile(V, (N + 1, 1))
    # free response including the flow input, stepped exactly
    free = np.zeros((N, 2))
    z = np.stack([x0, v0])  # rows: position, velocity; columns: axis
    for k in range(N):
        dV = V[k + 1] - V[k]
        xn = z[0] + b0 * z[1] + (cfg.dt - b0) * V[k] + c2 * dV
        vn = a * z[1] + (1.0 - a) * V[k] + c1 * dV
        z = np.stack([xn, vn])
        free[k] = z[0]
    # scale to mm / uN so the weights are well conditioned
    L, Fu = MPC_LENGTH_UNIT, MPC_FORCE_UNIT
    G = Su * (Fu / L)  # mm per uN
    c = (free - ref) / L  # mm
    # stacked variables: F[0..N-1, axis], flattened row-major (k, axis)
    Gb = np.kron(G, np.eye(2))
    Wq = np.kron(np.diag(np.r_[np.ones(N - 1), 0.0]), cfg.Q) + np.kron(np.diag(np.r_[np.zeros(N - 1), 1.0]), cfg.P)
    Wr = np.kron(np.eye(N), cfg.R)
    H = Gb.T @ Wq @ Gb + Wr
    g = Gb.T @ Wq @ c.reshape(-1)
    try:
        if np.linalg.cond(H) > 1e14:
            raise SolveError(f"MPC normal matrix is ill-conditioned (cond {np.linalg.cond(H):.2e})")
        u = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError as exc:
        raise SolveError(str(exc)) from None
    return u.reshape(N, 2) * Fu


def mpc_cost(F, x0, v0, ref, cfg: MpcConfig, c_t, mass, v_flow=None) -> float:
    """Cost of a force sequence, by forward simulation in the same units."""
    N = cfg.N
    F = np.asarray(F, dtype=np.float64).reshape(N, 2)
    ref = np.asarray(ref, dtype=np.float64).reshape(N, 2)
    a, b0, bx, bv, c1, c2 = discretize(c_t, mass, cfg.dt)
    V = np.zeros((N + 1, 2)) if v_flow is None else np.asarray(v_flow, dtype=np.float64)
    if V.ndim == 1:
        V = np.tile(V, (N + 1, 1))
    x = np.asarray(x0, dtype=np.float64).copy()
    v = np.asarray(v0, dtype=np.float64).copy()
    J = 0.0
    for k in range(N):
        dV = V[k + 1] - V[k]
        x, v = (x + b0 * v + bx * F[k] + (cfg.dt - b0) * V[k] + c2 * dV,
                a * v + bv * F[k] + (1.0 - a) * V[k] + c1 * dV)
        e = (x - ref[k]) / MPC_LENGTH_UNIT
        W = cfg.P if k == N - 1 else cfg.Q
        J += float(e @ W @ e)
        f = F[k] / MPC_FORCE_UNIT
        J += float(f @ cfg.R @ f)
    return J


def mpc_step(x0, v0, ref, cfg: MpcConfig, c_t: float, mass: float, v_flow=None,
             heading_d: float = math.pi / 4) -> ControlOutput:
    seq = mpc_solve(x0, v0, ref, cfg, c_t, mass, v_flow)
    return ControlOutput(seq[0].copy(), unit_heading(heading_d), {"sequence": seq})


class MpcController:
    kind = "MPC"

    def __init__(self, cfg: MpcConfig, mass: float, c_t: float, heading_d: float = math.pi / 4):
        self.cfg = cfg
        self.mass = mass
        self.c_t = c_t
        self.heading_d = heading_d

    def step(self, ctx, gains=None) -> ControlOutput:
        ref = np.array([ctx.reference(ctx.t + (k + 1) * self.cfg.dt) for k in range(self.cfg.N)])
        return mpc_step(ctx.x, ctx.v_robot, ref, self.cfg, self.c_t, self.mass, ctx.v_flow, self.heading_d)

    def applied(self, F_applied):
        pass


# --------------------------------------------------------------------------
# local retune inside a disturbance region
# --------------------------------------------------------------------------

RETUNE_I_MAX = 1.78
RETUNE_ETA = 1.75
RETUNE_PHI = 1.5


def point_in_polygon(point, polygon, tol: float = 1e-9) -> bool:
    """Closed polygon test: points on an edge count as inside."""
    px, py = float(point[0]), float(point[1])
    poly = np.asarray(polygon, dtype=np.float64)
    n = len(poly)
    inside = False
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        # on-edge check
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if abs(cross) <= tol * max(1.0, math.hypot(x2 - x1, y2 - y1)):
            if min(x1, x2) - tol <= px <= max(x1, x2) + tol and min(y1, y2) - tol <= py <= max(y1, y2) + tol:
                return True
        if (y1 > py) != (y2 > py):
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xc:
                inside = not inside
    return inside


def region_retune(position_mm, gains: SmcGains, i_max: float, polygon):
    """Return (gains, i_max, inside) with the region multipliers applied when
    the point lies in the closed polygon."""
    if polygon is None or not point_in_polygon(position_mm, polygon):
        return gains, i_max, False
    return replace(gains, eta=gains.eta * RETUNE_ETA, phi=gains.phi * RETUNE_PHI), i_max * RETUNE_I_MAX, True


def band_polygon(y_lo: float = -10.0, y_hi: float = 0.0, half_width: float = 60.0):
    return [(-half_width, y_lo), (half_width, y_lo), (half_width, y_hi), (-half_width, y_hi)]
