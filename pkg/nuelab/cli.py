"""Command-line driver: ``nuelab <subcommand> --config PATH [--out DIR] [--seed U64] [--workers N]``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from .model import ConfigError, NuelabError

logger = logging.getLogger("nuelab")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

RUN_COMMANDS = ("simulate", "hyptimes", "measure", "deviate", "escape", "tail", "bound", "ruelle-check")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nuelab", description="Simulation and estimation lab for non-uniformly expanding maps.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    commands = parser.add_subparsers(dest="command", required=True)
    for name in RUN_COMMANDS:
        sub = commands.add_parser(name, help=f"run a {name} experiment from a config file")
        sub.add_argument("--config", required=True, help="TOML experiment config")
        sub.add_argument("--out", help="output directory (overrides [output].directory)")
        sub.add_argument("--seed", type=int, help="u64 seed (overrides [numeric].seed)")
        sub.add_argument("--workers", type=int, help="worker processes (overrides [numeric].workers)")
    report = commands.add_parser("report", help="merge result bundles into one comparison table")
    report.add_argument("bundles", nargs="+", help="bundle directories or summary.json files")
    report.add_argument("--out", default="report.csv", help="report CSV path or directory")
    return parser


def _configure_logging(verbose: int, quiet: bool) -> None:
    level = logging.WARNING if quiet else logging.DEBUG if verbose > 1 else logging.INFO
    logging.basicConfig(level=level, format="%(message)s" if verbose == 0 else "%(levelname)s %(name)s: %(message)s")


def run_command(args: argparse.Namespace) -> int:
    from .artifacts import write_bundle
    from .config import load_config
    from .runner import run_experiment

    config = load_config(args.config).with_overrides(seed=args.seed, workers=args.workers, out=args.out)
    expected = args.command.replace("-", "_")
    if config.kind != expected:
        raise ConfigError(f"config describes a '{config.kind}' experiment, not '{expected}'", key="experiment.kind")
    logger.info("[config] complete")
    result = run_experiment(config)
    bundle = write_bundle(config, result)
    print(f"results: {bundle.results}")
    if "json" in config.formats:
        print(f"summary: {bundle.summary}")
    if bundle.chart is not None:
        print(f"chart:   {bundle.chart}")
    fit = result.results.get("fit")
    if fit and fit.get("status") == "ok":
        low, high = fit["xi_ci"]
        print(f"xi = {fit['xi']:.6f}  [{low:.6f}, {high:.6f}]")
    return EXIT_OK


def report_command(args: argparse.Namespace) -> int:
    from .artifacts import write_report

    path = write_report(args.bundles, args.out)
    print(f"report: {path}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(list(argv) if argv is not None else sys.argv[1:])
    _configure_logging(args.verbose, args.quiet)
    try:
        if args.command == "report":
            return report_command(args)
        return run_command(args)
    except ConfigError as exc:
        print(f"[config-error] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NuelabError as exc:
        print(f"[numeric-error] {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
