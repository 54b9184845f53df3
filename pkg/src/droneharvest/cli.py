"""Command-line entry point: ``droneharvest plan | sweep | validate``.

Exit codes: 0 success, 1 a validation suite failed, 2 the scenario could not
be parsed, 3 the target length is infeasible, 4 numerical failure (including a
vertex merge before the target was reached).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checks import validate_trace
from .estimator import HomotopyPathPlanner
from .exceptions import DroneHarvestError, RangeError, ScenarioError
from .homotopy import MERGE_DETECTED
from .io import (
    atomic_write_text,
    dumps_json,
    line_chart_svg,
    path_svg,
    plan_document,
    sweep_to_csv,
    trace_to_csv,
)
from .scenario import BUNDLED_CASES, ORDERING_METHODS, bundled_scenario_path, load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("droneharvest")


def _resolve(path):
    p = Path(path)
    if not p.exists() and path in BUNDLED_CASES:
        return bundled_scenario_path(path)
    return p


def _scenario(args):
    sc = load_scenario(_resolve(args.scenario))
    return sc.with_overrides(
        step_size=args.step,
        lambda0=args.lambda0,
        merge_threshold=args.merge_threshold,
        ordering=args.ordering,
        seed=args.seed,
        continue_after_merge=True if args.continue_after_merge else None,
    )


def _planner(sc):
    return HomotopyPathPlanner(
        p=sc.p, step_size=sc.step_size, lambda0=sc.lambda0,
        merge_threshold=sc.merge_threshold, ordering=sc.ordering,
        max_steps=sc.max_steps, continue_after_merge=sc.continue_after_merge,
    )


def _fit(sc, targets):
    return _planner(sc).fit(sc.heads_array, start=sc.start, end=sc.end,
                            target_lengths=targets)


def cmd_plan(args):
    sc = _scenario(args)
    out = Path(args.out)
    target = float(args.target)
    planner = _fit(sc, ())
    tour = planner.tour_length_
    floor = planner.problem_.floor_length()
    if not floor < target <= tour * (1 + 1e-12):
        print(f"error: target {target:g} outside ({floor:g}, {tour:g}]", file=sys.stderr)
        return EXIT_INFEASIBLE
    first_length = planner.trace_.samples[0].length
    if target < first_length:
        try:
            planner = _fit(sc, (target,))
        except RangeError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
    trace = planner.trace_
    if target < first_length and trace.terminated_reason != "target-length-reached":
        atomic_write_text(out / "trace.csv", trace_to_csv(trace))
        reached = trace.samples[-1].length
        why = "vertex merge" if trace.terminated_reason == MERGE_DETECTED else \
            trace.terminated_reason
        print(f"error: continuation stopped ({why}) at length {reached:.6g} "
              f"before target {target:g}; trace.csv written", file=sys.stderr)
        return EXIT_NUMERICAL
    doc = plan_document(planner, target, planner.multiplier_at(target), sc)
    path = planner.path_at(target)
    atomic_write_text(out / "trace.csv", trace_to_csv(trace))
    atomic_write_text(out / "path.svg", path_svg(
        path, planner.problem_.heads, f"length {doc['length']:.4g}, energy {doc['energy']:.4g}"))
    atomic_write_text(out / "plan.json", dumps_json(doc))
    print(f"length {doc['length']:.6f}  energy {doc['energy']:.6g}  "
          f"lambda {doc['lambda']:.6g}  -> {out}")
    return EXIT_OK


def cmd_sweep(args):
    sc = _scenario(args)
    out = Path(args.out)
    try:
        planner = _fit(sc, sc.target_lengths)
    except RangeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    trace = planner.trace_
    p = trace.problem.model.p
    defect = trace.tour_length - trace.lengths
    merge_s = [trace.samples[i].state.s for i, _ in trace.merge_events]
    atomic_write_text(out / "sweep.csv", sweep_to_csv(trace))
    atomic_write_text(out / "defect_vs_energy.svg", line_chart_svg(
        trace.energies ** (1.0 / p), defect, f"energy^(1/{p:g})", "path defect",
        "path defect against energy root"))
    atomic_write_text(out / "length_vs_step.svg", line_chart_svg(
        trace.s_values, trace.lengths, "s", "path length", "path length along the homotopy",
        markers=merge_s))
    print(f"{len(trace.samples)} samples, lengths {trace.lengths.min():.6g}.."
          f"{trace.lengths.max():.6g}, stopped: {trace.terminated_reason} -> {out}")
    return EXIT_OK


def cmd_validate(args):
    sc = _scenario(args)
    planner = _fit(sc, ())
    results = validate_trace(planner.trace_, seed=sc.seed, step_size=sc.step_size,
                             merge_threshold=sc.merge_threshold)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return EXIT_VALIDATION
    print(f"all {len(results)} suites passed")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="droneharvest",
        description="Energy-optimal drone harvesting paths under a length budget.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario",
                        help=f"scenario JSON file, or a bundled name {BUNDLED_CASES}")
        sp.add_argument("--step", type=float, help="RK4 step size")
        sp.add_argument("--lambda0", type=float, help="initial multiplier magnitude")
        sp.add_argument("--merge-threshold", type=float,
                        help="segment length treated as a vertex merge")
        sp.add_argument("--ordering", choices=ORDERING_METHODS)
        sp.add_argument("--seed", type=int, help="oracle random seed")
        sp.add_argument("--continue-after-merge", action="store_true",
                        help="integrate past the first merge (not validated)")

    sp = sub.add_parser("plan", help="path for one target length")
    common(sp)
    sp.add_argument("--target", type=float, required=True, help="target path length")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("sweep", help="full continuation from the tour to the first merge")
    common(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="run the verification suites")
    common(sp)
    sp.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except RangeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DroneHarvestError, ArithmeticError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
