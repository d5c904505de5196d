"""Command line: ``tc-alloc <solve|validate|figure1|mv-compare> --config FILE --out DIR``.

Exit status: 0 success, 2 bad configuration, 3 solver failure, 4 failed
internal check (Monte-Carlo z-score or closed-form comparison).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import RUN_KINDS, load_config
from .errors import ConfigError, ConvergenceError, DomainError, UnsupportedConfiguration
from .experiments import ValidationFailure, run_figure1, run_mv_compare, run_solve, run_validate

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tc-alloc", description="Time-consistent mean-risk asset allocation.")
    p.add_argument("kind", choices=RUN_KINDS, help="pipeline to run")
    p.add_argument("--config", required=True, type=Path, help="TOML experiment file")
    p.add_argument("--out", required=True, type=Path, help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=None, help="Monte-Carlo seed (overrides the config)")
    p.add_argument("--paths", type=int, default=None, help="Monte-Carlo path count (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        print(f"error: config file {args.config} not found", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.paths is not None:
        if args.paths < 2:
            print("error: --paths must be at least 2", file=sys.stderr)
            return EXIT_CONFIG
        cfg = replace(cfg, paths=args.paths)
    args.out.mkdir(parents=True, exist_ok=True)
    runners = {"solve": run_solve, "validate": run_validate, "figure1": run_figure1, "mv-compare": run_mv_compare}
    try:
        runners[args.kind](cfg, args.out)
    except ConvergenceError as exc:
        print(f"error: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValidationFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (DomainError, UnsupportedConfiguration, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
