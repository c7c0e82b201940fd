"""Command line entry point: plan, run, suite, calibrate.

Exit codes: 0 success, 2 configuration error, 3 trial failure (``run``
only), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .coilfield import CoilLayout, calibrate, default_layout
from .errors import MillibotError
from .planner import load_mask, plan, reference_trajectory
from .sensing import PIXEL_SIZE_MM
from .viz import svg_document

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRIAL_FAILED = 3
EXIT_IO = 4

log = logging.getLogger("millibot")


def parse_point(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected x,y but got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two numbers in {text!r}") from None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_plan(args) -> int:
    mask = load_mask(args.mask, args.pixel_size)
    start, goal = args.start, args.goal
    if args.pixels:
        # given as row,col
        start = tuple(mask.px_to_mm(start))
        goal = tuple(mask.px_to_mm(goal))
    path, cm = plan(mask, start, goal, args.min_clearance, args.w_clear, args.window, args.waypoints)
    ref = reference_trajectory(path, args.speed)
    out = Path(args.out)
    lines = ["idx,x_mm,y_mm"] + [f"{i},{x:.17g},{y:.17g}" for i, (x, y) in enumerate(path.waypoints)]
    _write(out / "path.csv", "\n".join(lines) + "\n")
    clear = cm.clearance[tuple(np.round(mask.mm_to_px(path.waypoints)).astype(int).T)]
    info = {"start_mm": list(start), "goal_mm": list(goal), "length_mm": path.total_length,
            "duration_s": ref.duration, "speed_mm_s": args.speed, "min_clearance_mm": float(clear.min()),
            "waypoints_mm": path.waypoints.tolist()}
    _write(out / "plan.json", json.dumps(info, indent=2) + "\n")
    _write(out / "plan.svg", svg_document(mask, desired=path.waypoints, waypoints=path.waypoints,
                                          feasible=cm.feasible))
    print(f"path: {len(path.waypoints)} waypoints, {path.total_length:.2f} mm, "
          f"{ref.duration:.1f} s at {args.speed:g} mm/s -> {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    sc = harness.Scenario.load(args.scenario)
    world = harness.build_world(sc)
    result = harness.run_trial(sc, world)
    harness.emit_outputs(result, args.out, world)
    s = result.summary()
    print(f"{sc.name}: rmse {s['rmse_mm']:.3f} mm, p95 {s['p95_mm']:.3f} mm, max {s['max_mm']:.3f} mm, "
          + ("completed" if s["completed"] else f"FAILED ({s['failure_reason']})"))
    return EXIT_OK if result.completed else EXIT_TRIAL_FAILED


def cmd_suite(args) -> int:
    path = Path(args.config)
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise harness.ConfigError(f"{path}: {exc}") from None
    scenarios = harness.suite_scenarios(cfg, path.parent)
    n = args.trials if args.trials is not None else int(cfg.get("n_trials", 3))
    rows, results = harness.run_suite(scenarios, n)
    out = Path(args.out)
    for sc, res in zip(scenarios, results):
        world = harness.build_world(sc)
        for k, r in enumerate(res):
            harness.emit_outputs(r, out / sc.name, world, stem=f"trial_{k}")
    table = harness.format_table(rows)
    _write(out / "table.txt", table + "\n")
    _write(out / "suite.json", json.dumps(rows, indent=2) + "\n")
    print(table)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    src = Path(args.coils)
    if src.exists():
        layout = CoilLayout.load(src)
    else:
        log.info("%s not found, starting from the default layout", src)
        layout = default_layout(calibrated=False)
    rep = calibrate(layout)
    dst = Path(args.out) if args.out else src
    dst.parent.mkdir(parents=True, exist_ok=True)
    rep.layout.save(dst)
    x, y = rep.peak_flux_location_m
    print(f"peak flux {rep.peak_flux_t * 1e3:.3f} mT at ({x * 1e3:.1f}, {y * 1e3:.1f}) mm, "
          f"peak gradient {rep.peak_gradient_mt_per_cm:.2f} mT/cm, gain scale {rep.scale:.4e} -> {dst}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="millibot", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="plan a reference path through a canal mask")
    sp.add_argument("--mask", required=True, help="binary PGM, white = navigable")
    sp.add_argument("--start", required=True, type=parse_point, help="x,y in mm (image-centred, y up)")
    sp.add_argument("--goal", required=True, type=parse_point)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pixels", action="store_true", help="start/goal are row,col pixel indices")
    sp.add_argument("--pixel-size", type=float, default=PIXEL_SIZE_MM, help="mm per pixel")
    sp.add_argument("--min-clearance", type=float, default=5.0, help="mm")
    sp.add_argument("--w-clear", type=float, default=0.5)
    sp.add_argument("--window", type=int, default=7)
    sp.add_argument("--waypoints", type=int, default=10)
    sp.add_argument("--speed", type=float, default=0.5, help="mm/s")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("run", help="run one closed-loop trial")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("suite", help="run a scenario suite and tabulate mean +- std")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trials", type=int, default=None, help="overrides n_trials in the config")
    sp.set_defaults(func=cmd_suite)

    sp = sub.add_parser("calibrate", help="calibrate a coil layout against the reference activation")
    sp.add_argument("--coils", required=True, help="layout JSON, rewritten in place unless --out is given")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_calibrate)
    return p


def _glue_points(argv):
    """Join "--start -13,7.5" into "--start=-13,7.5" so argparse does not
    mistake a negative coordinate for an option."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in ("--start", "--goal"):
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _glue_points(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MillibotError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
