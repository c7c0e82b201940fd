"""Scenario orchestration: the 10 Hz measure, control, allocate, integrate loop."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import control as ctl
from .coilfield import CoilLayout, allocate_currents, assemble_actuation_matrix, default_layout, unit_fields
from .dynamics import RobotParams, RobotState, step
from .errors import ConfigError, EmptySeriesError
from .flow import FlowField, PulsatileProfile, load_flow_csv
from .planner import CanalMask, PlannedPath, ReferenceTrajectory, load_mask, plan
from .sensing import SensorConfig, Sensor, VelocityEstimator

log = logging.getLogger(__name__)

CONTROLLERS = ("PID", "MPC", "SMC_DOB", "SMC_NO_DOB")
CSV_HEADER = (["t_s", "x_mm", "y_mm", "xd_mm", "yd_mm", "err_mm", "fx_n", "fy_n"]
              + [f"i{k}_a" for k in range(1, 9)] + ["sx", "sy", "dhat_x", "dhat_y"])
SUMMARY_KEYS = ("rmse_mm", "p95_mm", "max_mm", "completed", "failure_reason", "scenario_hash")

DEFAULT_I_MAX = 10.0  # A, the calibrated reference current
DEFAULT_B_SCALE = 5e-3  # T
DEFAULT_HEADING_DEG = 45.0
FAIL_ERROR_MM = 15.0
FAIL_SUSTAIN_S = 2.0
COMPLETE_RADIUS_MM = 2.0
WORKSPACE_HALF_WIDTH_MM = 50.0
DURATION_MARGIN_S = 60.0


# --------------------------------------------------------------------------
# scenario
# --------------------------------------------------------------------------

@dataclass
class ControllerSpec:
    type: str = "SMC_DOB"
    gains: dict = field(default_factory=dict)
    preset: str = "auto"  # "static", "flow" or "auto" (flow when peak_flow > 0)
    heading: object = DEFAULT_HEADING_DEG  # degrees, or "tangent" for SMC

    def __post_init__(self):
        if self.type not in CONTROLLERS:
            raise ConfigError(f"unknown controller type {self.type!r}; expected one of {CONTROLLERS}")
        if self.preset not in ("auto", "static", "flow"):
            raise ConfigError(f"unknown gain preset {self.preset!r}")
        if self.heading != "tangent":
            try:
                self.heading = float(self.heading)
            except (TypeError, ValueError):
                raise ConfigError(f"heading must be degrees or 'tangent', got {self.heading!r}") from None


@dataclass
class Scenario:
    name: str = "scenario"
    viscosity_cp: float = 20.0
    peak_flow: float = 0.0  # m/s, 0 disables flow
    pulsatile: PulsatileProfile = field(default_factory=PulsatileProfile)
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    robot: RobotParams = field(default_factory=RobotParams)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    path_file: str | None = None
    mask_file: str | None = None
    flow_file: str | None = None
    coils_file: str | None = None
    start: tuple | None = None  # mm
    goal: tuple | None = None
    speed: float = 0.5  # mm/s
    duration_limit: float | None = None  # s
    seed: int = 0
    retune_region: object = None  # None, "default" or a list of (x, y) mm vertices
    flow_sign_toggle: bool = False
    ct_mismatch: float = 0.0  # model c_t drawn uniformly within +-this fraction
    i_max: float = DEFAULT_I_MAX
    b_scale: float = DEFAULT_B_SCALE

    def validate(self):
        if not self.viscosity_cp > 0:
            raise ConfigError("viscosity_cp must be positive")
        if self.peak_flow < 0:
            raise ConfigError("peak_flow must be >= 0")
        if not self.speed > 0:
            raise ConfigError("speed must be positive")
        if self.duration_limit is not None and not self.duration_limit > 0:
            raise ConfigError("duration_limit must be positive")
        if not 0 <= self.ct_mismatch < 1:
            raise ConfigError("ct_mismatch must lie in [0, 1)")
        if not (self.i_max > 0 and self.b_scale > 0):
            raise ConfigError("i_max and b_scale must be positive")
        if self.path_file and self.mask_file:
            raise ConfigError("give either path_file or mask_file, not both")
        if self.controller.heading == "tangent" and not self.controller.type.startswith("SMC"):
            raise ConfigError("tangent heading is only defined for the sliding mode controllers")
        return self

    @property
    def flow_sign(self) -> float:
        return -1.0 if self.flow_sign_toggle else 1.0

    def polygon(self):
        if self.retune_region is None:
            return None
        if self.retune_region == "default":
            return ctl.band_polygon()
        poly = [tuple(float(v) for v in p) for p in self.retune_region]
        if len(poly) < 3:
            raise ConfigError("retune_region needs at least 3 vertices")
        return poly

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "viscosity_cp": self.viscosity_cp,
            "peak_flow_mps": self.peak_flow,
            "pulsatile": {"frequency": self.pulsatile.frequency, "waveform": self.pulsatile.waveform,
                          "phase": self.pulsatile.phase},
            "controller": {"type": self.controller.type, "gains": _jsonable(self.controller.gains),
                           "preset": self.controller.preset, "heading": self.controller.heading},
            "robot": self.robot.to_dict(),
            "sensor": {"rate": self.sensor.rate, "sigma_pos": self.sensor.sigma_pos,
                       "sigma_heading": self.sensor.sigma_heading, "dropout_prob": self.sensor.dropout_prob,
                       "latency_samples": self.sensor.latency_samples, "quantize": self.sensor.quantize,
                       "pixel_size": self.sensor.pixel_size},
            "path_file": self.path_file, "mask_file": self.mask_file, "flow_file": self.flow_file,
            "coils_file": self.coils_file,
            "start": None if self.start is None else list(self.start),
            "goal": None if self.goal is None else list(self.goal),
            "speed_mm_s": self.speed, "duration_limit_s": self.duration_limit, "seed": self.seed,
            "retune_region": self.retune_region, "flow_sign_toggle": self.flow_sign_toggle,
            "ct_mismatch": self.ct_mismatch, "i_max_a": self.i_max, "b_scale_t": self.b_scale,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "Scenario":
        d = dict(d)
        known = {"name", "viscosity_cp", "peak_flow_mps", "pulsatile", "controller", "robot", "sensor",
                 "path_file", "mask_file", "flow_file", "coils_file", "start", "goal", "speed_mm_s",
                 "duration_limit_s", "seed", "retune_region", "flow_sign_toggle", "ct_mismatch",
                 "i_max_a", "b_scale_t"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            ctrl = d.get("controller", {})
            if isinstance(ctrl, str):
                ctrl = {"type": ctrl}
            sensor = dict(d.get("sensor", {}))
            sensor.setdefault("seed", int(d.get("seed", 0)))
            sc = cls(
                name=str(d.get("name", "scenario")),
                viscosity_cp=float(d.get("viscosity_cp", 20.0)),
                peak_flow=float(d.get("peak_flow_mps", 0.0)),
                pulsatile=PulsatileProfile(**d.get("pulsatile", {})),
                controller=ControllerSpec(**ctrl),
                robot=RobotParams(**d.get("robot", {})),
                sensor=SensorConfig(**sensor),
                path_file=_resolve(d.get("path_file"), base_dir),
                mask_file=_resolve(d.get("mask_file"), base_dir),
                flow_file=_resolve(d.get("flow_file"), base_dir),
                coils_file=_resolve(d.get("coils_file"), base_dir),
                start=None if d.get("start") is None else tuple(float(v) for v in d["start"]),
                goal=None if d.get("goal") is None else tuple(float(v) for v in d["goal"]),
                speed=float(d.get("speed_mm_s", 0.5)),
                duration_limit=None if d.get("duration_limit_s") is None else float(d["duration_limit_s"]),
                seed=int(d.get("seed", 0)),
                retune_region=d.get("retune_region"),
                flow_sign_toggle=bool(d.get("flow_sign_toggle", False)),
                ct_mismatch=float(d.get("ct_mismatch", 0.0)),
                i_max=float(d.get("i_max_a", DEFAULT_I_MAX)),
                b_scale=float(d.get("b_scale_t", DEFAULT_B_SCALE)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None
        return sc.validate()

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(d, path.parent)

    def scenario_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _resolve(p, base_dir):
    if p is None:
        return None
    p = Path(p)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return str(p)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# --------------------------------------------------------------------------
# world construction
# --------------------------------------------------------------------------

@dataclass
class World:
    mask: CanalMask | None
    path: PlannedPath
    reference: ReferenceTrajectory
    flow: FlowField | None
    layout: CoilLayout


def read_path_csv(path) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"cannot parse path file {path}: {exc}") from None
    if data.shape[1] != 3 or data.shape[0] < 2:
        raise ConfigError(f"{path}: expected columns idx,x_mm,y_mm and at least 2 rows")
    return data[:, 1:3]


_WORLD_CACHE: dict = {}


def build_world(sc: Scenario) -> World:
    from . import phantom

    key = (sc.path_file, sc.mask_file, sc.flow_file, sc.coils_file, sc.start, sc.goal, sc.peak_flow,
           sc.pulsatile, sc.speed)
    if key in _WORLD_CACHE:
        return _WORLD_CACHE[key]
    mask = None
    if sc.path_file:
        wp = read_path_csv(sc.path_file)
        total = float(np.sum(np.linalg.norm(np.diff(wp, axis=0), axis=1)))
        path = PlannedPath(wp, total)
    else:
        mask = load_mask(sc.mask_file) if sc.mask_file else phantom.bundled_mask()
        start = sc.start if sc.start is not None else tuple(phantom.DEFAULT_GEOMETRY.start)
        goal = sc.goal if sc.goal is not None else tuple(phantom.DEFAULT_GEOMETRY.goal)
        path, _ = plan(mask, start, goal)
    flow = None
    if sc.flow_file:
        grid = load_flow_csv(sc.flow_file)
        if sc.peak_flow > 0:
            grid = grid.scaled(sc.peak_flow / float(grid.speed().max()))
        flow = FlowField(grid, sc.pulsatile)
    elif sc.peak_flow > 0:
        flow = FlowField(phantom.phantom_flow(sc.peak_flow), sc.pulsatile)
    layout = CoilLayout.load(sc.coils_file) if sc.coils_file else _default_layout()
    world = World(mask, path, ReferenceTrajectory(path.waypoints, sc.speed), flow, layout)
    _WORLD_CACHE[key] = world
    return world


_LAYOUT = None


def _default_layout():
    global _LAYOUT
    if _LAYOUT is None:
        _LAYOUT = default_layout()
    return _LAYOUT


def make_controller(sc: Scenario, mass: float, c_t_model: float):
    spec = sc.controller
    flow_preset = spec.preset == "flow" or (spec.preset == "auto" and sc.peak_flow > 0)
    heading = None if spec.heading == "tangent" else math.radians(90.0 - spec.heading)
    # unit_heading(theta) = [sin theta, cos theta]; a field at angle a from +x
    # needs theta = 90 deg - a.
    try:
        if spec.type in ("SMC_DOB", "SMC_NO_DOB"):
            base = (ctl.SmcGains.flow_defaults if flow_preset else ctl.SmcGains.static_defaults)(sc.viscosity_cp)
            gains = ctl.SmcGains.from_dict(spec.gains, base)
            c = ctl.SmcDobController(gains, mass, c_t_model, use_dob=spec.type == "SMC_DOB",
                                     flow_sign=sc.flow_sign)
        elif spec.type == "PID":
            base = ctl.PidGains.flow_defaults() if flow_preset else ctl.PidGains.static_defaults()
            c = ctl.PidController(ctl.PidGains.from_dict(spec.gains, base), c_t_model, heading, sc.flow_sign)
        else:
            c = ctl.MpcController(ctl.MpcConfig.from_dict(spec.gains), mass, c_t_model, heading)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid controller gains: {exc}") from None
    c.fixed_theta = heading
    return c


# --------------------------------------------------------------------------
# trial
# --------------------------------------------------------------------------

@dataclass
class StepContext:
    t: float
    dt: float
    x: np.ndarray  # measured position, m
    v_robot: np.ndarray  # estimated velocity, m/s
    e: np.ndarray
    e_dot: np.ndarray
    v_flow: np.ndarray
    tangent: np.ndarray
    reference: object  # callable t -> desired position in m


@dataclass
class TrialResult:
    series: dict
    rmse_mm: float
    p95_mm: float
    max_mm: float
    completed: bool
    failure_reason: str | None
    scenario_hash: str
    info: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"rmse_mm": self.rmse_mm, "p95_mm": self.p95_mm, "max_mm": self.max_mm,
                "completed": self.completed, "failure_reason": self.failure_reason,
                "scenario_hash": self.scenario_hash}


def metrics(err) -> tuple:
    """(rmse, p95, max) of an error series; p95 interpolates linearly."""
    e = np.asarray(err, dtype=np.float64)
    if e.size == 0:
        raise EmptySeriesError("error series is empty")
    return float(np.sqrt(np.mean(e * e))), float(np.percentile(e, 95)), float(np.max(e))


def _physical(layout, currents, position_m, moment):
    """Field and force the coils actually produce at the robot's true position."""
    B_i, G_i = unit_fields(layout.coils, position_m)
    B = currents @ B_i
    G = np.einsum("n,nij->ij", currents, G_i)
    nb = math.hypot(B[0], B[1])
    m = moment * B / nb if nb > 0 else np.zeros(2)
    return G.T @ m, B


def run_trial(sc: Scenario, world: World | None = None) -> TrialResult:
    sc.validate()
    world = world or build_world(sc)
    ref = world.reference
    if sc.duration_limit is None:
        limit = ref.duration + DURATION_MARGIN_S
    else:
        limit = sc.duration_limit
        if limit <= ref.duration:
            warnings.warn(f"duration_limit {limit:g} s is shorter than the path time {ref.duration:g} s",
                          RuntimeWarning, stacklevel=2)
    ss = np.random.SeedSequence(sc.seed)
    sensor_seed, ct_seed = ss.spawn(2)
    rng_ct = np.random.default_rng(ct_seed)
    params = sc.robot
    c_t_true = params.c_t(sc.viscosity_cp)
    c_t_model = c_t_true * (1.0 + sc.ct_mismatch * (2.0 * rng_ct.random() - 1.0))
    sensor = Sensor(sc.sensor, seed=np.random.default_rng(sensor_seed).integers(2**63))
    vel = VelocityEstimator()
    ctrl = make_controller(sc, params.mass, c_t_model)
    polygon = sc.polygon()
    layout = world.layout
    T = 1.0 / sc.sensor.rate
    flow = world.flow
    goal = ref.waypoints[-1]

    p0 = ref.position(0.0) * 1e-3
    state = RobotState(p0, np.zeros(2), math.radians(DEFAULT_HEADING_DEG), 0.0)
    currents = np.zeros(8)
    F_applied = np.zeros(2)
    B_applied = np.zeros(2)
    F_des = np.zeros(2)
    s_diag = np.zeros(2)
    dhat = np.zeros(2)

    rows = []
    over_since = None
    completed = False
    reason = None
    n_sat = 0
    n_retune = 0
    k = 0
    while True:
        t = k * T
        state = replace(state, t=t)
        meas = sensor(state)
        xd_mm = ref.position(t)
        pos_mm = 1000.0 * state.position
        err = float(np.hypot(*(pos_mm - xd_mm)))
        if meas.valid:
            v_mm = vel.update(meas)
            x_m = meas.position * 1e-3
            v_m = v_mm * 1e-3
            e = xd_mm * 1e-3 - x_m
            e_dot = ref.velocity(t) * 1e-3 - v_m
            v_flow = np.zeros(2)
            if flow is not None:
                v_flow, _ = flow.sample_mean(meas.position)
            gains, i_max, inside = None, sc.i_max, False
            if isinstance(ctrl, ctl.SmcDobController):
                gains, i_max, inside = ctl.region_retune(meas.position, ctrl.gains, sc.i_max, polygon)
            elif polygon is not None and ctl.point_in_polygon(meas.position, polygon):
                i_max, inside = sc.i_max * ctl.RETUNE_I_MAX, True
            n_retune += inside
            ctx = StepContext(t, T, x_m, v_m, e, e_dot, v_flow, ref.tangent(t),
                              lambda tt: ref.position(tt) * 1e-3)
            out = ctrl.step(ctx, gains)
            F_des = out.F_des
            if ctrl.fixed_theta is None:
                B_dir = ref.tangent(t)
            else:
                B_dir = ctl.unit_heading(ctrl.fixed_theta)
            s_diag = out.diagnostics.get("s", np.zeros(2))
            dhat = out.diagnostics.get("d_hat", np.zeros(2))
            C = np.concatenate([F_des, layout.omega_o * sc.b_scale * B_dir])
            A = assemble_actuation_matrix(layout.coils, params.dipole_moment * B_dir, x_m, layout.omega_o)
            currents, saturated = allocate_currents(A, C, i_max)
            n_sat += saturated
            ctrl.applied(A.A[:2] @ currents)
        F_applied, B_applied = _physical(layout, currents, state.position, params.dipole_moment)
        rows.append((t, pos_mm[0], pos_mm[1], xd_mm[0], xd_mm[1], err, F_des[0], F_des[1], *currents,
                     s_diag[0], s_diag[1], dhat[0], dhat[1]))

        if t >= ref.duration - 1e-9 and float(np.hypot(*(pos_mm - goal))) <= COMPLETE_RADIUS_MM:
            completed = True
            break
        if err > FAIL_ERROR_MM:
            over_since = t if over_since is None else over_since
            if t - over_since >= FAIL_SUSTAIN_S - 1e-9:
                reason = "tracking_error"
                break
        else:
            over_since = None
        if np.any(np.abs(pos_mm) > WORKSPACE_HALF_WIDTH_MM):
            reason = "workspace_exit"
            break
        if t + T > limit + 1e-9:
            reason = "timeout"
            break
        state = step(state, F_applied, B_applied, flow, params, T, c_t_true)
        k += 1

    data = np.array(rows, dtype=np.float64)
    series = {name: data[:, j] for j, name in enumerate(CSV_HEADER)}
    rmse, p95, mx = metrics(series["err_mm"])
    info = {"c_t_true": c_t_true, "c_t_model": c_t_model, "steps": len(rows),
            "saturated_fraction": n_sat / len(rows), "retune_fraction": n_retune / len(rows)}
    return TrialResult(series, rmse, p95, mx, completed, reason, sc.scenario_hash(), info)


# --------------------------------------------------------------------------
# outputs
# --------------------------------------------------------------------------

def format_csv(result: TrialResult) -> str:
    cols = [result.series[name] for name in CSV_HEADER]
    lines = [",".join(CSV_HEADER)]
    for row in zip(*cols):
        lines.append(",".join(f"{float(v):.17g}" for v in row))
    return "\n".join(lines) + "\n"


def load_series_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, j] for j, name in enumerate(header)}


def svg_overlay(result: TrialResult, world: World | None = None, size: int = 600) -> str:
    """Mask outline, desired path and the robot's path with start/end markers."""
    from .viz import svg_document

    desired = np.column_stack([result.series["xd_mm"], result.series["yd_mm"]])
    actual = np.column_stack([result.series["x_mm"], result.series["y_mm"]])
    mask = world.mask if world is not None else None
    waypoints = world.path.waypoints if world is not None else None
    return svg_document(mask, desired=desired, actual=actual, waypoints=waypoints, size=size)


def emit_outputs(result: TrialResult, out_dir, world: World | None = None, stem: str = "trial") -> dict:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out / f"{stem}.csv", "summary": out / f"{stem}_summary.json", "svg": out / f"{stem}.svg"}
        paths["csv"].write_text(format_csv(result))
        paths["summary"].write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
        paths["svg"].write_text(svg_overlay(result, world))
    except OSError as exc:
        raise IOError(f"cannot write outputs to {out}: {exc}") from exc
    return paths


# --------------------------------------------------------------------------
# suites
# --------------------------------------------------------------------------

def _deep_update(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def suite_scenarios(cfg: dict, base_dir: Path | None = None):
    base = cfg.get("base", {})
    entries = cfg.get("scenarios", [])
    if not entries:
        raise ConfigError("suite needs at least one scenario")
    return [Scenario.from_dict(_deep_update(base, e), base_dir) for e in entries]


def _run_one(args):
    sc, k = args
    return run_trial(replace(sc, seed=sc.seed + k))


def max_workers() -> int:
    env = os.environ.get("MILLIBOT_THREADS")
    n = os.cpu_count() or 1
    if env:
        try:
            n = max(1, int(env))
        except ValueError:
            raise ConfigError(f"MILLIBOT_THREADS must be an integer, got {env!r}") from None
    return n


def run_suite(scenarios, n_trials: int = 3, workers: int | None = None):
    """Run every scenario ``n_trials`` times with seeds seed+k.

    Returns (rows, results) where results[i][k] is trial k of scenario i.
    """
    if not scenarios:
        raise ConfigError("suite needs at least one scenario")
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    jobs = [(sc, k) for sc in scenarios for k in range(n_trials)]
    workers = min(workers or max_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(_run_one, jobs))
    else:
        flat = [_run_one(j) for j in jobs]
    results = [flat[i * n_trials:(i + 1) * n_trials] for i in range(len(scenarios))]
    rows = [summarize(sc, res) for sc, res in zip(scenarios, results)]
    return rows, results


def summarize(sc: Scenario, results) -> dict:
    row = {"name": sc.name, "controller": sc.controller.type, "viscosity_cp": sc.viscosity_cp,
           "peak_flow_mps": sc.peak_flow, "n_trials": len(results),
           "completed": sum(r.completed for r in results)}
    for key in ("rmse_mm", "p95_mm", "max_mm"):
        vals = np.array([getattr(r, key) for r in results])
        row[key] = float(vals.mean())
        row[key.replace("_mm", "_std_mm")] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    failures = [r.failure_reason for r in results if not r.completed]
    row["status"] = "ok" if not failures else "failed to complete trajectory"
    row["failure_reasons"] = failures
    return row


def format_table(rows) -> str:
    head = f"{'scenario':<28} {'ctrl':<11} {'cP':>5} {'flow':>6}  {'RMSE':>13} {'P95':>13} {'Max':>13}"
    lines = [head, "-" * len(head)]
    for r in rows:
        if r["status"] != "ok":
            body = f"  -- failed to complete trajectory ({r['completed']}/{r['n_trials']} completed)"
        else:
            body = "".join(f"  {r[k]:6.2f}+-{r[k.replace('_mm', '_std_mm')]:4.2f}"
                           for k in ("rmse_mm", "p95_mm", "max_mm"))
        lines.append(f"{r['name']:<28} {r['controller']:<11} {r['viscosity_cp']:5.1f} "
                     f"{100 * r['peak_flow_mps']:4.0f}cm{body}")
    return "\n".join(lines)
