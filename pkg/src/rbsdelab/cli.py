"""Command line entry point.

Subcommands: solve, sweep-lambda, sweep-n, sweep-coupled, validate,
list-problems. Experiments are described by a flat key=value config file;
--out, --seed and --format override the corresponding config keys.

Exit codes: 0 success, 1 failed validation, 2 configuration error,
3 numerical abort.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import ConfigurationError, NumericalAbort
from .experiments import (ExperimentConfig, emit, parse_config_file, run_coupled_sweep,
                          run_discretization_sweep, run_penalization_sweep,
                          run_single_solve, run_validation)
from .problem import BUILTIN_NAMES

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_common(parser):
    parser.add_argument("--config", help="path to a key=value config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="seed (overrides config)")
    parser.add_argument("--format", choices=("csv", "json"), dest="fmt",
                        help="report format (overrides config)")


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config_file(args.config) if args.config else ExperimentConfig()
    updates = {}
    if getattr(args, "out", None) is not None:
        updates["out"] = args.out
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "fmt", None) is not None:
        updates["fmt"] = args.fmt
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _print_report(report):
    for pt in report.points:
        err = "" if pt.err_y_sup is None else f"  err_y={pt.err_y_sup:.6g}"
        print(f"lambda={pt.lam:g}  n={pt.n}  y0={pt.y0:.10g}{err}  ({pt.seconds:.2f}s)")
    for name, fit in report.fits.items():
        if fit is not None:
            print(f"fit[{name}]: slope={fit.slope:.4f}  r2={fit.r_squared:.4f}")
    for note in report.notes:
        print(f"note: {note}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rbsdelab",
                                     description="penalized/reflected backward-SDE experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "single solve (lattice or mc backend)"),
        ("sweep-lambda", "penalty sweep against the reflected oracle"),
        ("sweep-n", "mesh self-convergence sweep at fixed penalty"),
        ("sweep-coupled", "coupled sweep lambda = ceil(n^theta)"),
        ("validate", "numerically check the declared problem assumptions"),
    ):
        _add_common(sub.add_parser(name, help=help_text))
    sub.add_parser("list-problems", help="list built-in problems")

    args = parser.parse_args(argv)

    try:
        if args.command == "list-problems":
            for name in BUILTIN_NAMES:
                print(name)
            return EXIT_OK

        cfg = _load_config(args)

        if args.command == "validate":
            report = run_validation(cfg)
            for check in report.checks:
                status = "pass" if check.passed else "FAIL"
                extra = f"  worst={check.worst_violation:.3g} at {check.worst_sample}" \
                    if not check.passed else ""
                print(f"{check.name:>4}: {status}  ({check.detail}){extra}")
            return EXIT_OK if report.all_passed else EXIT_VALIDATION_FAILED

        runner = {
            "solve": run_single_solve,
            "sweep-lambda": run_penalization_sweep,
            "sweep-n": run_discretization_sweep,
            "sweep-coupled": run_coupled_sweep,
        }[args.command]
        report = runner(cfg)
        paths = emit(report, cfg.fmt, cfg.out)
        _print_report(report)
        for path in paths:
            print(f"wrote {path}")
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
