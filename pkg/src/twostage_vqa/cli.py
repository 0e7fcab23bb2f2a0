"""Command-line entry point.

Verbs:
  run <config>       run the configured experiment, write artifacts
  validate <config>  parse + validate, print the resolved config
  lemma-suite        toy-problem convergence checks; exit 0 iff all pass
  version            print the package version

Worker count for sweep jobs comes from the TWOSTAGE_VQA_WORKERS environment
variable (default 1; results are identical at any worker count).
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import ConfigError, config_to_text, load_config
from .runner import run_experiment, run_lemma_suite


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twostage-vqa",
        description="Two-stage VQA optimizer and BB84 cloning-attack experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config", help="path to the experiment config")

    p_val = sub.add_parser("validate", help="check a config file and echo it resolved")
    p_val.add_argument("config", help="path to the experiment config")

    p_lemma = sub.add_parser("lemma-suite", help="run the toy-problem lemma checks")
    p_lemma.add_argument(
        "--output", default=None, help="directory for lemma_suite.csv (optional)"
    )

    sub.add_parser("version", help="print the package version")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return 0
    if args.command == "lemma-suite":
        return run_lemma_suite(args.output)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        sys.stdout.write(config_to_text(cfg))
        return 0
    return run_experiment(cfg)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
