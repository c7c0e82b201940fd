"""Acceptance checks, one per criterion.

Each ``criterion_k`` returns (ok, detail).  The pytest wrappers record a
``criterion k: PASS/FAIL (...)`` line, printed in the terminal summary, and
then assert.  Run this file directly to print the lines without pytest:

    python tests/test_acceptance.py [k ...]
"""

import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from millibot import control as ctl
from millibot import harness, kernels
from millibot.coilfield import (REFERENCE_PEAK_FLUX_T, FieldSample, allocate_currents, calibrate, default_layout,
                                force_torque)
from millibot.dynamics import RobotParams, RobotState, drag_coefficient, step
from millibot.errors import NoPathError
from millibot.phantom import DEFAULT_GEOMETRY, bundled_mask
from millibot.planner import astar, moving_average, plan

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# runtime budgets in seconds
BUDGET = {1: 1, 2: 5, 3: 5, 4: 30, 5: 2, 6: 5, 7: 120, 8: 120, 9: 120, 10: 120, 11: 60, 12: 60}


# --------------------------------------------------------------------------
# suite runs shared between criteria
# --------------------------------------------------------------------------

_CACHE = {}


def load_suite(name):
    cfg = json.loads((CONFIGS / name).read_text())
    return harness.suite_scenarios(cfg, CONFIGS), int(cfg.get("n_trials", 3))


def run_scenarios(scenarios, n):
    """Rows keyed by scenario name; identical scenarios are run once."""
    todo = [sc for sc in scenarios if (sc.scenario_hash(), n) not in _CACHE]
    if todo:
        rows, results = harness.run_suite(todo, n)
        for sc, row, res in zip(todo, rows, results):
            _CACHE[(sc.scenario_hash(), n)] = (row, res)
    return {sc.name: _CACHE[(sc.scenario_hash(), n)] for sc in scenarios}


def suite(name):
    scs, n = load_suite(name)
    return run_scenarios(scs, n)


def ratio(a, b):
    return a / b if b > 0 else math.inf


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------

def criterion_1():
    c20 = drag_coefficient(20 * 1e-3, 7.4e-3, 1.4e-3)
    c43 = drag_coefficient(4.3 * 1e-3, 7.4e-3, 1.4e-3)
    m = RobotParams().dipole_moment
    F, _ = force_torque([m, 0.0], FieldSample(B=np.array([0.01, 0.0]), grad=np.array([[0.43, 0.0], [0.0, -0.43]])))
    F = float(np.linalg.norm(F))
    e20 = abs(c20 / 5.585e-4 - 1)
    e43 = abs(c43 / 1.201e-4 - 1)
    eF = abs(F / 0.37e-3 - 1)
    ok = e20 <= 1e-3 and e43 <= 1e-3 and eF <= 5e-3 and m == 8.60e-4
    return ok, (f"c_t(20cP)={c20:.4e} ({e20:.2%}), c_t(4.3cP)={c43:.4e} ({e43:.2%}), "
                f"F(0.43 T/m)={F * 1e3:.4f} mN ({eF:.2%})")


def criterion_2():
    rep = calibrate(default_layout(calibrated=False))
    err = abs(rep.peak_flux_t / REFERENCE_PEAK_FLUX_T - 1)
    g = rep.peak_gradient_mt_per_cm
    ok = err <= 1e-3 and 10.0 <= g <= 18.0
    return ok, f"peak flux {rep.peak_flux_t * 1e3:.4f} mT ({err:.3%}), peak gradient {g:.2f} mT/cm"


def criterion_3():
    rng = np.random.default_rng(2024)
    worst_rel = 0.0
    min_norm = True
    for _ in range(1000):
        A = rng.standard_normal((4, 8)) * rng.uniform(0.1, 10, (4, 1))
        C = rng.standard_normal(4)
        I, _ = allocate_currents(A, C, np.inf)
        ref = A.T @ np.linalg.solve(A @ A.T, C)
        worst_rel = max(worst_rel, np.linalg.norm(I - ref) / np.linalg.norm(ref))
        null = np.linalg.svd(A)[2][4:]
        for _ in range(5):
            other = I + null.T @ rng.standard_normal(4)
            min_norm &= bool(np.linalg.norm(I) <= np.linalg.norm(other) + 1e-12)
        # I must itself lie in the row space of A
        min_norm &= bool(np.linalg.norm(null @ I) <= 1e-10 * np.linalg.norm(I))
    ok = worst_rel <= 1e-8 and min_norm
    return ok, f"worst relative deviation {worst_rel:.2e}, minimal norm {'holds' if min_norm else 'violated'}"


STEPS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def dijkstra_cost(cost, s, g):
    """Textbook Dijkstra with the same step costs as the planner."""
    import heapq

    ny, nx = cost.shape
    dist = np.full((ny, nx), np.inf)
    dist[s] = 0.0
    heap = [(0.0, s)]
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if d > dist[r, c]:
            continue
        if (r, c) == g:
            return d
        for dr, dc in STEPS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < ny and 0 <= cc < nx and np.isfinite(cost[rr, cc]):
                nd = d + (math.sqrt(2.0) if dr and dc else 1.0) * cost[rr, cc]
                if nd < dist[rr, cc]:
                    dist[rr, cc] = nd
                    heapq.heappush(heap, (nd, (rr, cc)))
    return math.inf


def with_border(free):
    f = free.copy()
    f[0, :] = f[-1, :] = f[:, 0] = f[:, -1] = False
    return f


def brute_edt_sq(f):
    obst = np.argwhere(~f)
    out = np.zeros(f.shape)
    for r, c in np.argwhere(f):
        out[r, c] = np.min((obst[:, 0] - r) ** 2 + (obst[:, 1] - c) ** 2)
    return out


def criterion_4():
    rng = np.random.default_rng(4)
    n_astar = 0
    worst = 0.0
    while n_astar < 200:
        feasible = rng.random((50, 50)) > 0.3
        cost = np.where(feasible, 1.0 + rng.random((50, 50)), np.inf)
        cells = np.argwhere(feasible)
        s, g = (tuple(int(v) for v in c) for c in cells[rng.choice(len(cells), 2, replace=False)])
        ref = dijkstra_cost(cost, s, g)
        try:
            _, c = astar(cost, s, g)
        except NoPathError:
            c = math.inf
        if not np.isfinite(ref):
            if np.isfinite(c):
                worst = math.inf
            continue
        worst = max(worst, abs(c - ref) / ref)
        n_astar += 1
    # the planner treats the image border as obstacle
    edt_ok = all(np.array_equal(kernels.edt_sq(m), brute_edt_sq(m))
                 for m in (with_border(rng.random((32, 32)) > rng.uniform(0.05, 0.6)) for _ in range(100)))
    mask = bundled_mask()
    path, cm = plan(mask, DEFAULT_GEOMETRY.start, DEFAULT_GEOMETRY.goal)
    pix = path.pixel_path
    rc = np.round(mask.mm_to_px(path.waypoints)).astype(int)
    clear = min(cm.clearance[pix[:, 0], pix[:, 1]].min(), cm.clearance[rc[:, 0], rc[:, 1]].min())
    # spacing along the smoothed curve the waypoints were resampled from
    dense = mask.px_to_mm(moving_average(pix, 7))
    seg = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    stations = []
    for w in path.waypoints:
        k = int(np.argmin(np.linalg.norm(dense - w, axis=1)))
        lo, hi = max(k - 1, 0), min(k + 1, len(dense) - 1)
        a, b = dense[lo], dense[hi]
        t = np.clip((w - a) @ (b - a) / max((b - a) @ (b - a), 1e-300), 0, 1)
        stations.append(arc[lo] + t * (arc[hi] - arc[lo]))
    gaps = np.diff(stations)
    even = gaps.max() - gaps.min() <= mask.pixel_size
    ok = worst <= 1e-9 and edt_ok and clear >= 5.0 and len(path.waypoints) == 10 and even
    return ok, (f"A* vs Dijkstra worst rel {worst:.1e} over {n_astar} maps, EDT exact={edt_ok}, "
                f"min clearance {clear:.2f} mm, {len(path.waypoints)} waypoints, "
                f"arc gaps {gaps.min():.2f}-{gaps.max():.2f} mm")


def criterion_5():
    # Robot held at rest by a force that exactly balances a constant disturbance;
    # exact model, so d_hat must converge to the injected value.
    p = RobotParams()
    ct, m = p.c_t(20.0), p.mass
    g = ctl.SmcGains.static_defaults()
    d = np.array([2.0e-6, -1.0e-6])
    dt = 1e-3
    st = RobotState()
    dob = ctl.DobState(F_prev=-d)
    t_hit = None
    n = int(round(5 * g.eta / dt))
    for k in range(1, n + 1):
        dob, d_hat = ctl.dob_update(dob, -st.velocity, -d, st.velocity, np.zeros(2), ct, m, g.eta,
                                    g.Wp, g.Wr, dt)
        st = step(st, -d + d, np.array([1.0, 0.0]), None, p, dt, ct)
        err = np.linalg.norm(d_hat - d) / np.linalg.norm(d)
        if err <= 0.02 and t_hit is None:
            t_hit = k * dt
    final = np.linalg.norm(d_hat - d) / np.linalg.norm(d)
    ok = final <= 0.02 and np.all(st.velocity == 0)
    return ok, (f"error {final:.2%} at 5*eta={5 * g.eta:.2f} s, within 2% from t={t_hit:.3f} s")


def lyapunov_run(dt=0.01, T=60.0, use_dob=True):
    p = RobotParams()
    ct, m = p.c_t(20.0), p.mass
    g = ctl.SmcGains.static_defaults()
    d = np.array([1.5e-6, -1.0e-6])
    st = RobotState(position=np.array([-0.06, 0.045]))
    dob = ctl.DobState()
    S = []
    for _ in range(int(round(T / dt))):
        out, dob = ctl.smc_dob_step(-st.position, -st.velocity, st.velocity, dob, g, np.zeros(2), ct, m, dt,
                                    use_dob=use_dob)
        S.append(out.diagnostics["s"])
        st = step(st, out.F_des + d, np.array([1.0, 0.0]), None, p, dt, ct)
    return np.array(S), g, d


def criterion_6():
    S, g, d = lyapunov_run(use_dob=False)
    V = 0.5 * np.einsum("ij,ij->i", S, S)
    big = np.abs(S[:-1]).max(axis=1) > 3 * g.phi
    inc = int(np.sum(np.diff(V)[big] > 0))
    tail = np.linalg.norm(S[len(S) // 2:], axis=1).max() / g.phi
    S2, _, _ = lyapunov_run(use_dob=True)
    tail2 = np.linalg.norm(S2[len(S2) // 2:], axis=1).max() / g.phi
    ok = g.K4 > np.abs(d).max() and inc == 0 and big.sum() > 0 and tail <= 5 and tail2 <= 5
    return ok, (f"K4={g.K4:.2e} > |d|={np.abs(d).max():.1e}, {int(big.sum())} steps with |s|>3phi, "
                f"{inc} increases of V; settled |s|/phi {tail:.2f} (no DOB), {tail2:.1e} (DOB)")


def criterion_7():
    r = suite("table1_static.json")
    smc, pid, mpc = (r[f"{c}_20cp_static"][0] for c in ("smc_dob", "pid", "mpc"))
    lo = {c: r[f"{c}_4.3cp_static"][0] for c in ("smc_dob", "pid", "mpc")}
    order = smc["rmse_mm"] < pid["rmse_mm"] < mpc["rmse_mm"]
    smc_lo_ok = lo["smc_dob"]["completed"] == lo["smc_dob"]["n_trials"]
    ok = order and smc["rmse_mm"] <= 0.49 and smc_lo_ok
    note = ", ".join(f"{c.upper()} 4.3cP {v['completed']}/{v['n_trials']} complete" for c, v in lo.items())
    return ok, (f"20cP RMSE SMC-DOB {smc['rmse_mm']:.3f} < PID {pid['rmse_mm']:.3f} < MPC {mpc['rmse_mm']:.3f} mm; "
                + note)


def criterion_8():
    r = suite("moderate_flow.json")
    smc, res_s = r["smc_dob_20cp_7cm"]
    pid, res_p = r["pid_20cp_7cm"]
    peak = ratio(pid["max_mm"], smc["max_mm"])
    pooled = ratio(max(x.max_mm for x in res_p), max(x.max_mm for x in res_s))
    ok = smc["rmse_mm"] < pid["rmse_mm"] and peak >= 2.0 and smc["rmse_mm"] <= 2.0
    return ok, (f"RMSE SMC-DOB {smc['rmse_mm']:.3f} vs PID {pid['rmse_mm']:.3f} mm; peak ratio {peak:.2f}x "
                f"(worst-trial ratio {pooled:.2f}x, gate 2x); PID {pid['completed']}/{pid['n_trials']} complete")


def criterion_9():
    r = suite("elevated_flow.json")
    re_, _ = r["smc_dob_20cp_10cm_retune"]
    pl, _ = r["smc_dob_20cp_10cm_plain"]
    re_ok = re_["completed"] == re_["n_trials"] and re_["rmse_mm"] <= 2.0
    plain_fail = pl["completed"] < pl["n_trials"]
    increase = ratio(pl["rmse_mm"], re_["rmse_mm"]) - 1.0
    ok = re_ok and (plain_fail or increase >= 0.25)
    return ok, (f"retune {re_['completed']}/{re_['n_trials']} complete, RMSE {re_['rmse_mm']:.3f} mm; "
                f"plain {pl['completed']}/{pl['n_trials']} complete, RMSE {pl['rmse_mm']:.3f} mm "
                f"({increase:+.0%} vs retune, gate +25% or a failure)")


def criterion_10():
    r = suite("viscosity.json")
    hi, _ = r["smc_dob_20cp_7cm"]
    lo, _ = r["smc_dob_4.3cp_7cm"]
    both = hi["completed"] == hi["n_trials"] and lo["completed"] == lo["n_trials"]
    ok = both and lo["rmse_mm"] > hi["rmse_mm"] and lo["rmse_mm"] <= 2.0
    hi10, lo10 = r["smc_dob_20cp_10cm"][0], r["smc_dob_4.3cp_10cm"][0]
    return ok, (f"7 cm/s RMSE 4.3cP {lo['rmse_mm']:.3f} vs 20cP {hi['rmse_mm']:.3f} mm; "
                f"10 cm/s variant (info): 4.3cP {lo10['rmse_mm']:.3f} "
                f"({lo10['completed']}/{lo10['n_trials']}) vs 20cP {hi10['rmse_mm']:.3f} mm "
                f"({hi10['completed']}/{hi10['n_trials']})")


def criterion_11():
    r = suite("ablation.json")
    dob, _ = r["smc_dob_20cp_7cm"]
    nodob, _ = r["smc_no_dob_20cp_7cm"]
    q = ratio(nodob["rmse_mm"], dob["rmse_mm"])
    return q >= 3.0, f"RMSE without DOB {nodob['rmse_mm']:.3f} vs with {dob['rmse_mm']:.3f} mm, ratio {q:.2f}x"


def criterion_12():
    sc = harness.Scenario.load(CONFIGS / "smc_moderate_flow.json")
    sc = harness.Scenario.from_dict(dict(sc.to_dict(), sensor=dict(sc.to_dict()["sensor"], dropout_prob=0.05)))
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            harness._WORLD_CACHE.clear()
            res = harness.run_trial(sc)
            paths = harness.emit_outputs(res, Path(tmp) / str(k))
            blobs.append((paths["csv"].read_bytes(), paths["summary"].read_bytes()))
    same = blobs[0] == blobs[1]
    return same, f"CSV {len(blobs[0][0])} bytes and summary JSON identical across two runs: {same}"


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 13)}


def evaluate(k):
    t0 = time.perf_counter()
    ok, detail = CRITERIA[k]()
    dt = time.perf_counter() - t0
    in_budget = dt <= BUDGET[k]
    ok = bool(ok) and in_budget
    line = (f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail}; runtime {dt:.1f} s"
            f"{'' if in_budget else f' over the {BUDGET[k]} s budget'})")
    return ok, line


# --------------------------------------------------------------------------
# pytest wrappers
# --------------------------------------------------------------------------

def _check(k, acceptance_log):
    ok, line = evaluate(k)
    acceptance_log[k] = line
    print(line)
    assert ok, line


def test_criterion_1(acceptance_log):
    _check(1, acceptance_log)


def test_criterion_2(acceptance_log):
    _check(2, acceptance_log)


def test_criterion_3(acceptance_log):
    _check(3, acceptance_log)


def test_criterion_4(acceptance_log):
    _check(4, acceptance_log)


def test_criterion_5(acceptance_log):
    _check(5, acceptance_log)


def test_criterion_6(acceptance_log):
    _check(6, acceptance_log)


@pytest.mark.slow
def test_criterion_7(acceptance_log):
    _check(7, acceptance_log)


@pytest.mark.slow
def test_criterion_8(acceptance_log):
    _check(8, acceptance_log)


@pytest.mark.slow
def test_criterion_9(acceptance_log):
    _check(9, acceptance_log)


@pytest.mark.slow
def test_criterion_10(acceptance_log):
    _check(10, acceptance_log)


@pytest.mark.slow
def test_criterion_11(acceptance_log):
    _check(11, acceptance_log)


@pytest.mark.slow
def test_criterion_12(acceptance_log):
    _check(12, acceptance_log)


if __name__ == "__main__":
    wanted = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    failed = 0
    for k in wanted:
        ok, line = evaluate(k)
        failed += not ok
        print(line, flush=True)
    sys.exit(1 if failed else 0)
