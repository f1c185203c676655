#!/usr/bin/env python3
"""
pCCE Simulator Entry Point.

Batch front-end for the Hahn-echo simulator: single runs, concentration x
thickness sweeps, convergence studies, plot-data export and configuration
validation. Configuration files are JSON (or YAML) documents validated before
any computation starts.

Usage:
    1. Single run:
       python scripts/pcce.py run --config configs/run_pcce_2d.json

    2. Concentration sweep, skipping finished cells:
       python scripts/pcce.py sweep --config configs/sweep_scaling.json --workers 8 --resume

    3. Convergence in the dipole radius:
       python scripts/pcce.py convergence --config configs/convergence_rd.json

    4. Plot data for existing runs:
       python scripts/pcce.py plot runs/ --out plots/

    5. Check a configuration:
       python scripts/pcce.py validate --config configs/run_exact_small.json

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

# ------------------------------------------------------------------------------
# Path Setup
# ------------------------------------------------------------------------------
# Add the project root to sys.path to allow imports from 'src'
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.cli.commands import (  # noqa: E402
    cmd_convergence,
    cmd_plot,
    cmd_run,
    cmd_sweep,
    cmd_validate,
)
from src.core.config import settings  # noqa: E402

# ------------------------------------------------------------------------------
# Logging Configuration
# ------------------------------------------------------------------------------
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler(sys.stdout)],
)
logger = logging.getLogger("pcce")


def seed_arg(text: str) -> int:
    """
    Parse a 64-bit unsigned seed.

    Raises:
        argparse.ArgumentTypeError: If the value is not an integer in [0, 2^64).
    """
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Not an integer seed: '{text}'.")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"Seed {value} outside [0, 2^64).")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="pCCE spin-bath Hahn-echo simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="Path to the JSON/YAML configuration")
        p.add_argument("--seed", type=seed_arg, help="Override the ensemble master seed")
        p.add_argument(
            "--workers",
            type=int,
            default=settings.WORKERS,
            help="Worker processes (results do not depend on this)",
        )
        p.add_argument("--out", help="Output directory (overrides the configuration)")

    common(sub.add_parser("run", help="Execute a single run configuration"))

    sweep = sub.add_parser("sweep", help="Run a concentration x thickness grid")
    common(sweep)
    sweep.add_argument(
        "--resume", action="store_true", help="Skip cells already completed with the same config hash"
    )

    common(sub.add_parser("convergence", help="Vary one parameter and compare curves"))

    plot = sub.add_parser("plot", help="Write gnuplot data for run records")
    plot.add_argument("paths", nargs="*", help="Run directories or parents of run directories")
    plot.add_argument("--out", help="Directory for the plot-data files")

    validate = sub.add_parser("validate", help="Validate a configuration without running it")
    validate.add_argument("--config", required=True, help="Path to the configuration")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "run":
        return cmd_run(args.config, args.seed, args.workers, args.out)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.seed, args.workers, args.out, args.resume)
    if args.command == "convergence":
        return cmd_convergence(args.config, args.seed, args.workers, args.out)
    if args.command == "plot":
        return cmd_plot(args.paths or [settings.OUTPUT_DIR], args.out)
    return cmd_validate(args.config)


if __name__ == "__main__":
    sys.exit(main())
