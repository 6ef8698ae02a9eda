"""Command line entry point: ``lorafl run <config> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .linkmodel import NumericalFailure
from .fl import TrainingDiverged
from .runner import PRESETS, expand_preset, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lorafl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write metrics.csv / metrics.jsonl")
    run.add_argument("config", type=Path, help="scenario YAML file")
    run.add_argument("--preset", choices=sorted(PRESETS), help="expand into a predefined sweep")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--link-mode", choices=("sim", "analytical"), help="override the link model")
    run.add_argument("--out", type=Path, help="output directory (default: the config's output)")
    return parser


def run_command(args: argparse.Namespace) -> list[Path]:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.link_mode is not None:
        overrides["schedule.link_mode"] = args.link_mode
    if overrides:
        cfg = cfg.replace(**overrides)
    variants = expand_preset(cfg, args.preset)
    if args.link_mode is not None:
        variants = [v.replace(**{"schedule.link_mode": args.link_mode}) for v in variants]
    return run_scenario(cfg, args.out, variants)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        paths = run_command(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"lorafl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, TrainingDiverged) as exc:
        print(f"lorafl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
