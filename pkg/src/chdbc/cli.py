"""Command-line entry point.

Exit status is 0 when every asserted invariant passed, 2 when an experiment
finished but some invariant failed (see ``summary.json``), and 1 for any
operational error (bad config, I/O, solver breakdown).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, config_summary, parse_plan
from .experiments import ExperimentError, emit_report, run_experiment

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2

VERBS = ("run", "sweep-lambda", "sweep-eps", "stability", "mms", "check-config")

log = logging.getLogger("chdbc")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chdbc",
        description="Viscous Cahn-Hilliard solver with dynamic boundary conditions.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", type=Path, default=None,
                       help="key-value configuration file (defaults if omitted)")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default: ./chdbc-out/<verb>)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweep members")
        p.add_argument("--seed", type=int, default=0, help="seed of the perturbation noise")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_ERROR
    kind = None if args.verb == "check-config" else args.verb
    try:
        plan = parse_plan(text, kind=kind, output_dir=args.out, seed=args.seed)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    if args.verb == "check-config":
        print(json.dumps(config_summary(plan.base), indent=2, sort_keys=True))
        return EXIT_OK

    out = args.out or Path("chdbc-out") / args.verb
    try:
        report = run_experiment(plan, threads=args.threads)
        emit_report(report, out)
    except (ExperimentError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    for name, ok in sorted(report.checks.items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"report written to {out}")
    return EXIT_OK if report.passed else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
