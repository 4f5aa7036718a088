"""Flags shared by several subcommands"""
import argparse
import math
from pathlib import Path

from ..core.config import DEFAULT_WORKERS, OUT_DIR


def add_seed(parser: argparse.ArgumentParser, default=0):
    parser.add_argument("--seed", type=int, default=default, help="master seed (default: %(default)s)")


def add_out_dir(parser: argparse.ArgumentParser):
    parser.add_argument("--out-dir", type=Path, default=None,
                        help=f"directory for written files (default: {OUT_DIR})")


def add_snr(parser: argparse.ArgumentParser):
    parser.add_argument("--snr", type=float, default=math.inf, help="SNR in dB; 'inf' means noiseless")


def add_run_overrides(parser: argparse.ArgumentParser):
    """Flags that override fields of an experiment document"""
    add_seed(parser, default=None)
    add_out_dir(parser)
    parser.add_argument("--workers", type=int, default=None,
                        help=f"parallel trial workers (document default, else {DEFAULT_WORKERS})")
    parser.add_argument("--exact-tol", type=float, default=None, help="relative error counted as exact recovery")
    parser.add_argument("--time-budget", type=float, default=None, help="tMax override for tree searches, seconds")


def out_dir(args: argparse.Namespace) -> Path:
    path = args.out_dir if args.out_dir is not None else OUT_DIR
    path.mkdir(parents=True, exist_ok=True)
    return path
