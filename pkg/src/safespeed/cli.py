"""Command line front end.

`safespeed run` simulates a scenario file and writes the CSV logs; exit code 0
means a clean run, 2 a scenario problem, 3 a ground-truth collision.
`safespeed make-world` writes one of the built-in worlds to disk.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .harness import ScenarioError, load_scenario, run, write_outputs
from .speed_search import ThresholdFunction
from .worlds import WORLDS, materialize


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safespeed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write CSV logs")
    p_run.add_argument("--scenario", required=True, help="scenario YAML file")
    p_run.add_argument("--out", required=True, help="output directory for the CSVs")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--duration", type=float, default=None, help="override run length [s]")
    p_run.add_argument("--threshold", choices=["constant", "linear", "exp"], default=None,
                       help="override the threshold family")
    p_run.add_argument("--p0", type=float, default=None, help="threshold value at speed 0")
    p_run.add_argument("--k", type=float, default=None, help="threshold decay rate")
    p_run.add_argument("--p-floor", type=float, default=None, help="threshold lower bound")
    p_run.add_argument("--levels", type=int, default=None, help="override speed grid size")
    p_run.add_argument("--search", choices=["binary", "scan"], default=None)
    p_run.add_argument("--heatmap", choices=["on", "off"], default=None,
                       help="evaluate the full speed grid every tick")
    p_run.add_argument("--workers", type=int, default=1,
                       help="threads for the per-tick grid sweep")

    p_world = sub.add_parser("make-world", help="write a built-in world to disk")
    p_world.add_argument("name", choices=sorted(WORLDS), help="world to generate")
    p_world.add_argument("--out", required=True, help="directory for scenario.yaml and map.pgm")
    return parser


def _apply_overrides(scenario, args):
    tf = scenario.threshold
    if args.threshold is not None:
        kind = {"exp": "exponential"}.get(args.threshold, args.threshold)
        tf = replace(tf, kind=kind)
    if args.p0 is not None:
        tf = replace(tf, p0=args.p0)
    if args.k is not None:
        tf = replace(tf, k=args.k)
    if args.p_floor is not None:
        tf = replace(tf, p_floor=args.p_floor)
    updates = {"threshold": tf}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.duration is not None:
        updates["duration"] = args.duration
    if args.levels is not None:
        updates["speed_levels"] = args.levels
    if args.search is not None:
        updates["search"] = args.search
    if args.heatmap is not None:
        updates["heatmap"] = args.heatmap == "on"
    return replace(scenario, **updates)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "make-world":
        path = materialize(args.name, args.out)
        print(f"wrote {path}")
        return 0

    try:
        scenario = _apply_overrides(load_scenario(args.scenario), args)
        if args.workers < 1:
            raise ScenarioError("workers must be at least 1")
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    log = run(scenario, workers=args.workers)
    paths = write_outputs(log, args.out)
    v_s = [tk.v_s for tk in log.ticks] or [0.0]
    print(f"{scenario.name}: {len(log.ticks)} ticks, "
          f"v_s min {min(v_s):.2f} max {max(v_s):.2f}, "
          f"jerk {log.jerk_mean_abs_dv():.4f}")
    for key in sorted(paths):
        print(f"  {key}: {paths[key]}")
    if log.collided:
        print(f"ground-truth collision at t={log.collision_time:.2f} s", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
