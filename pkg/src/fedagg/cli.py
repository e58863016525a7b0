"""Command-line entry point: ``fedagg --config run.ini [overrides]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .baselines import STRATEGIES
from .config import DEFAULT_CONFIG_TEXT, ConfigError, ExperimentConfig, load_config, parse_lambda_grid
from .orchestrator import run_sweep


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fedagg",
        description="Simulate federated rounds and compare aggregation strategies.",
    )
    p.add_argument("--config", help="INI config file (see --print-default-config)")
    p.add_argument("--strategy", help="run only this strategy (see --list-strategies)")
    p.add_argument("--lambda-grid", help="comma-separated lambda values for dualcrit, e.g. 0,0.5,1")
    p.add_argument("--rounds", type=int, help="communication rounds per cell")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("--out-dir", help="directory for CSVs, checkpoints and summary.json")
    p.add_argument("--workers", type=int, help="worker threads for clients and cells")
    p.add_argument("--list-strategies", action="store_true", help="print strategy names and exit")
    p.add_argument("--print-default-config", action="store_true", help="print the default config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s | %(levelname)s | %(message)s",
        datefmt="%H:%M:%S",
    )

    if args.list_strategies:
        print("\n".join(STRATEGIES))
        return 0
    if args.print_default_config:
        sys.stdout.write(DEFAULT_CONFIG_TEXT)
        return 0
    if args.strategy is not None and args.strategy not in STRATEGIES:
        parser.error(f"unknown strategy {args.strategy!r}; valid names: {', '.join(STRATEGIES)}")

    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = config.with_overrides(
            strategies=(args.strategy,) if args.strategy else None,
            lambda_grid=parse_lambda_grid(args.lambda_grid) if args.lambda_grid else None,
            rounds=args.rounds,
            seed=args.seed,
            out_dir=args.out_dir,
            workers=args.workers,
        )
        record = run_sweep(config)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"fedagg: error: {exc}", file=sys.stderr)
        return 1

    for cell in record.cells:
        final = cell.rounds[-1] if cell.rounds else None
        acc = f"{final.accuracy:.4f}" if final else "-"
        print(f"{cell.name:<28} {cell.status:<9} rounds={len(cell.rounds):<3} final_acc={acc}")
    print(f"wrote results to {config.out_dir}")
    return 0 if all(c.status == "ok" for c in record.cells) else 1


if __name__ == "__main__":
    sys.exit(main())
