"""Command-line front end: ``riemspline solve`` and ``riemspline check``."""

import argparse
import dataclasses
import logging
import os
import sys

from riemspline.scenario import (
    ScenarioError,
    export_outputs,
    load_scenario,
    parse_scenario,
    run_scenario,
    tissot_indicatrix,
)

__all__ = ["main", "parse_scenario", "run_scenario", "export_outputs", "tissot_indicatrix"]

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_PARSE = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4

LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("riemspline")


def configure_logging(stream=None):
    value = os.environ.get("RIEMSPLINE_LOG", "info").strip().lower()
    level = LOG_LEVELS.get(value)
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.INFO if level is None else level)
    if level is None:
        log.warning("RIEMSPLINE_LOG=%r not understood; use quiet, info or debug", value)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _non_negative_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="riemspline",
        description="Force-aware optimal trajectories on Riemannian configuration spaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve a scenario file and export the results")
    solve.add_argument("scenario", help="path to a scenario TOML file")
    solve.add_argument("--out", metavar="DIR", help="output directory (overrides the scenario)")
    solve.add_argument("--force-scale", type=_non_negative_float, metavar="S",
                       help="multiply all external forces by S")
    solve.add_argument("--segments", type=_positive_int, metavar="N", help="shooting segments")
    solve.add_argument("--steps", type=_positive_int, metavar="N", help="RK4 steps per segment")
    solve.add_argument("--tol", type=_positive_float, metavar="X", help="residual tolerance")
    solve.add_argument("--baseline", action="store_true",
                       help="also evaluate the Euclidean interpolation baseline")
    solve.add_argument("--tissot", type=_non_negative_int, metavar="N",
                       help="number of Tissot indicatrix samples to export")

    sub.add_parser("check", help="run the built-in invariant suite")
    return parser


def apply_overrides(scenario, args):
    solver = scenario.solver
    if args.segments is not None:
        solver = dataclasses.replace(solver, segments=args.segments)
    if args.steps is not None:
        solver = dataclasses.replace(solver, steps=args.steps)
    if args.tol is not None:
        solver = dataclasses.replace(solver, tolerance=args.tol)
    if solver.segments * solver.steps < 10:
        raise ScenarioError("segments * steps must be at least 10", field="solver.steps")
    changes = {"solver": solver}
    if args.force_scale is not None:
        changes["force_scale"] = args.force_scale
    if args.baseline:
        changes["comparison"] = "euclidean_interpolation"
    if args.out is not None:
        changes["output"] = args.out
    if args.tissot is not None:
        changes["tissot_points"] = args.tissot
    return dataclasses.replace(scenario, **changes)


def cmd_solve(args):
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        log.error("cannot parse %s: %s", args.scenario, exc)
        return EXIT_PARSE
    except OSError as exc:
        log.error("cannot read %s: %s", args.scenario, exc)
        return EXIT_IO
    try:
        scenario = apply_overrides(scenario, args)
    except ScenarioError as exc:
        log.error("invalid option: %s", exc)
        return EXIT_PARSE

    result = run_scenario(scenario)
    try:
        written = export_outputs(result)
    except OSError as exc:
        log.error("cannot write outputs to %s: %s", scenario.output, exc)
        return EXIT_IO
    for path in written:
        log.info("wrote %s", path)
    if not result.converged:
        log.error("solver did not converge: %s", result.report.message)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_check(args):
    from riemspline.checks import run_checks

    results = run_checks()
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILED_CHECK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which is also our parse-error code
        return int(exc.code or 0)
    configure_logging()
    if args.command == "solve":
        return cmd_solve(args)
    return cmd_check(args)


if __name__ == "__main__":
    sys.exit(main())
