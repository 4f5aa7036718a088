import argparse
import logging
from pathlib import Path

import pandas as pd

from ...core.config import S95_THRESHOLD
from ...core.exceptions import InvalidArgumentError
from ...schemas.bench_schema import ExperimentConfig
from ...services.bench_service import run_and_write, s95_table
from ...services.config_service import load_config
from ..options import add_run_overrides, out_dir

logger = logging.getLogger(__name__)

SUMMARY_KEYS = ["algorithm", "snr_db", "sparsity", "recovery_rate"]


def register(subparsers):
    run = subparsers.add_parser("run", help="run a Monte-Carlo recovery experiment")
    run.add_argument("config", help="experiment document (JSON, or TOML with a .toml suffix)")
    add_run_overrides(run)
    run.set_defaults(handler=run_command)

    s95 = subparsers.add_parser("s95", help="largest sparsity recovered at the threshold rate, per algorithm and SNR")
    s95.add_argument("summary", help="summary.csv written by run")
    s95.add_argument("--threshold", type=float, default=S95_THRESHOLD)
    s95.add_argument("--output", default=None, help="also write the table to this CSV path")
    s95.set_defaults(handler=s95_command)


def run_command(args: argparse.Namespace) -> int:
    config = load_config(
        ExperimentConfig, args.config,
        master_seed=args.seed, workers=args.workers, exact_tol=args.exact_tol, time_budget=args.time_budget,
    )
    paths = run_and_write(config, out_dir(args))
    print(pd.read_csv(paths["s95"]).to_string(index=False))
    for path in paths.values():
        print(path)
    return 0


def s95_command(args: argparse.Namespace) -> int:
    summary = pd.read_csv(args.summary)
    missing = [key for key in SUMMARY_KEYS if key not in summary.columns]
    if missing:
        raise InvalidArgumentError(f"{args.summary} lacks summary columns {missing}")
    table = s95_table(summary, args.threshold)
    if args.output is not None:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.output, index=False)
        logger.info(f"Wrote s95 table to {args.output}")
    print(table.to_string(index=False))
    return 0
