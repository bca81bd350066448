"""Command line: ``cliffordlab <experiment-id> [--config path | flags] --out path``.

Exit status 0 when every check passes, 1 on a failed check, 2 on a usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .cauchy import PositiveMeasureError
from .experiments import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    list_experiments,
    run_experiment,
)
from .fractals import BudgetError
from .grid import GridError
from .jets import PreconditionError

ALIASES = {("fractal", "gen"): "fractal-gen"}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cliffordlab", description="Run one batch experiment and write a JSON report.")
    parser.add_argument("--list", action="store_true", help="print experiments with parameter schemas as JSON")
    sub = parser.add_subparsers(dest="experiment", metavar="experiment")
    for exp in EXPERIMENTS.values():
        sp = sub.add_parser(exp.id, help=exp.summary, description=exp.summary)
        sp.add_argument("--config", help="JSON config file; inline flags override its params")
        out_help = {"report": "report path", "points": "CSV output for the points", "jet": "JSON output for the jet"}
        sp.add_argument("--out", help=out_help[exp.out_kind])
        sp.add_argument("--report", help="report path (defaults to --out for report-only experiments)")
        sp.add_argument("--curves", help="CSV path for convergence curves")
        for p in exp.params:
            default = "required" if p.default is None else repr(p.default)
            sp.add_argument(_flag(p.name), dest=p.name, default=argparse.SUPPRESS, help=f"{p.help} [{p.rule}; default {default}]")
    return parser


def _normalize(argv: list[str]) -> list[str]:
    if len(argv) >= 2 and (argv[0], argv[1]) in ALIASES:
        return [ALIASES[(argv[0], argv[1])]] + argv[2:]
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = _normalize(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    if args.list:
        print(json.dumps(list_experiments(), indent=2, sort_keys=True))
        return 0
    if not args.experiment:
        parser.print_usage(sys.stderr)
        return 2
    exp = EXPERIMENTS[args.experiment]
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig(args.experiment)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
        for p in exp.params:
            if p.name in vars(args):
                cfg.params[p.name] = getattr(args, p.name)
        cfg.out = args.out or cfg.out
        cfg.report = args.report or cfg.report
        cfg.curves = args.curves or cfg.curves
        report = run_experiment(cfg)
    except (ConfigError, PositiveMeasureError, PreconditionError, BudgetError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value} {c.relation} {c.tolerance}")
    print(f"{exp.id}: {'all checks passed' if report.passed else 'CHECK FAILURE'} ({report.wall_clock:.2f} s)")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
