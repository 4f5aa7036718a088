import argparse

from ..core.config import LOG_LEVEL, VERSION
from .commands import experiment_commands, matrix_commands, scorer_commands, solve_commands


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparse-recovery",
        description="Sparse signal recovery by scorer-guided tree search, with greedy baselines and benchmarks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-dir", default=None, help="directory of the rotating log file")
    parser.add_argument("--no-log-file", action="store_true", help="log to the console only")

    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")

    # Register all command modules
    matrix_commands.register(subparsers)
    scorer_commands.register(subparsers)
    solve_commands.register(subparsers)
    experiment_commands.register(subparsers)
    return parser
