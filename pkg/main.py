# main.py

import argparse
import asyncio
import logging
import sys
from typing import List, Optional

from config.logging_config import setup_logging
from config.settings import settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PIPELINE_ERROR = 1
EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groundlab",
        description="Infinity ground state lab: solve, verify and report on convex planar domains",
    )
    parser.add_argument("--log-level", default=None, help=f"logging level (default {settings.log_level})")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment file")
    run.add_argument("config", help="YAML experiment file")
    run.add_argument("--seed", type=int, default=None, help="override the experiment seed")
    run.add_argument("--out", default=None, help="override the output directory")
    run.add_argument("--checks", default=None, help="comma-separated check names")
    run.add_argument("--workers", type=int, default=None, help=f"concurrent checks (default {settings.max_workers})")

    report = sub.add_parser("report", help="consolidate the results of a run directory")
    report.add_argument("dir", help="run directory holding MANIFEST.json")
    return parser


def _split_checks(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [c.strip() for c in value.split(",") if c.strip()]


def cmd_run(args: argparse.Namespace) -> int:
    from config.experiment import load_experiment
    from core.exceptions import ConfigError
    from core.orchestrator import ExperimentOrchestrator

    try:
        config = load_experiment(args.config, seed=args.seed, out=args.out, checks=_split_checks(args.checks))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    orchestrator = ExperimentOrchestrator(config, max_workers=args.workers)
    result = asyncio.run(orchestrator.run())
    print(result.summary_text())
    return EXIT_OK if result.complete else EXIT_PIPELINE_ERROR


def cmd_report(args: argparse.Namespace) -> int:
    from core.exceptions import GroundLabError
    from core.orchestrator import build_report

    try:
        print(build_report(args.dir))
    except GroundLabError as e:
        print(f"report error: {e}", file=sys.stderr)
        return EXIT_PIPELINE_ERROR
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    if args.command == "run":
        return cmd_run(args)
    return cmd_report(args)


if __name__ == "__main__":
    sys.exit(main())
