#!/usr/bin/env python
"""Time the numba kernels against their numpy/python fallbacks.

    python benchmarks/bench_kernels.py            # kernels only
    python benchmarks/bench_kernels.py --trial    # also one closed-loop trial per backend

The first call of every jitted kernel is made before timing so compilation
is excluded.
"""

import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from millibot import kernels
from millibot.phantom import DEFAULT_GEOMETRY, phantom_flow, render_mask
from millibot.planner import build_cost_map, distance_transform, project_to_feasible


def cases(rng):
    grid = phantom_flow(0.07)
    gx0, gy0 = grid.origin
    args_bil = (grid.vx, grid.vy, grid.domain_mask, float(gx0), float(gy0), float(grid.spacing), -13.2, 4.7)
    args_int = (-0.013, 0.007, 0.0, 0.0, 1e-6, -2e-6, 5e-5, 5.585e-4, 1e-3, 100, 0.0,
                True, grid.vx, grid.vy, grid.domain_mask, float(gx0), float(gy0), float(grid.spacing),
                3.0, 0.0, kernels.WAVE_RECTIFIED_SINE)
    free = rng.random((128, 128)) > 0.2
    mask = render_mask(size=200)
    cm = build_cost_map(distance_transform(mask), min_clearance=5.0)
    s = project_to_feasible(mask.mm_to_px(DEFAULT_GEOMETRY.start), cm)
    g = project_to_feasible(mask.mm_to_px(DEFAULT_GEOMETRY.goal), cm)
    args_astar = (np.ascontiguousarray(cm.cost), int(s[0]), int(s[1]), int(g[0]), int(g[1]))
    return {
        "bilinear": args_bil,
        "integrate": args_int,
        "edt_sq": (free,),
        "astar": args_astar,
    }


def bench(fn, args, repeat):
    fn(*args)  # warm-up / compile
    n, _ = timeit.Timer(lambda: fn(*args)).autorange()
    best = min(timeit.Timer(lambda: fn(*args)).repeat(repeat, n)) / n
    return best


def trial_time(no_numba: bool) -> float:
    env = dict(os.environ, MILLIBOT_NO_NUMBA="1" if no_numba else "0")
    code = ("import time; from millibot.harness import Scenario, ControllerSpec, run_trial;"
            "sc = Scenario(peak_flow=0.07, controller=ControllerSpec('SMC_DOB'));"
            "run_trial(sc); t = time.perf_counter(); run_trial(sc); print(time.perf_counter() - t)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--trial", action="store_true", help="also time a full 7 cm/s trial per backend")
    args = p.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<12} {'numba':>12} {'fallback':>12} {'speedup':>9}")
    for name, a in cases(rng).items():
        fast, slow = kernels.VARIANTS[name]
        tf = bench(fast, a, args.repeat)
        ts = bench(slow, a, args.repeat)
        print(f"{name:<12} {tf * 1e6:10.1f}us {ts * 1e6:10.1f}us {ts / tf:8.1f}x")

    if args.trial:
        t0 = time.perf_counter()
        fast = trial_time(False)
        slow = trial_time(True)
        print(f"{'trial':<12} {fast:11.2f}s {slow:11.2f}s {slow / fast:8.1f}x"
              f"   (wall {time.perf_counter() - t0:.0f}s incl. startup)")


if __name__ == "__main__":
    main()
