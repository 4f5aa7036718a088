import argparse
import logging

import numpy as np
import pandas as pd

from ...core.exceptions import InvalidArgumentError
from ...schemas.baseline_schema import BaselineKind
from ...schemas.bench_schema import AlgorithmConfig, BaselineOptions, TsnOptions
from ...schemas.problem_schema import SignalDistribution, SignalKind
from ...services.bench_service import AlgorithmRunner
from ...services.ensemble_service import format_entry, import_matrix_csv, import_vector_csv
from ...services.linalg_service import residual_norm
from ..options import add_out_dir, add_seed, add_snr, out_dir

logger = logging.getLogger(__name__)

ALGORITHMS = [kind.value for kind in BaselineKind] + ["tsn"]


def register(subparsers):
    parser = subparsers.add_parser("solve", help="recover a sparse signal from one measurement vector")
    parser.add_argument("--matrix", required=True, help="sensing matrix CSV")
    parser.add_argument("--measurement", required=True, help="measurement vector CSV, one entry per row")
    parser.add_argument("--algorithm", choices=ALGORITHMS, default="tsn")
    parser.add_argument("--sparsity", type=int, required=True,
                        help="target sparsity s for baselines, k for the tree search")
    parser.add_argument("--preset", default="tau1", help="tree search parameter preset")
    parser.add_argument("--scorer", default="correlation", help="correlation, random or the path of a model JSON")
    parser.add_argument("--known-sparsity", action="store_true", help="return the k-support without thresholding")
    parser.add_argument("--distribution", choices=[k.value for k in SignalKind],
                        default=SignalKind.SYMMETRIC_INTERVAL.value, help="sets the final threshold")
    parser.add_argument("--min-mag", type=float, default=None, help="smallest nonzero magnitude of x0")
    parser.add_argument("--time-budget", type=float, default=None, help="tMax override, seconds")
    parser.add_argument("--output", default="estimate.csv", help="estimate file name under --out-dir")
    add_snr(parser)
    add_seed(parser)
    add_out_dir(parser)
    parser.set_defaults(handler=solve_command)


def algorithm_config(args: argparse.Namespace) -> AlgorithmConfig:
    if args.algorithm == "tsn":
        if args.scorer == "oracle":
            raise InvalidArgumentError("the oracle scorer needs the true support and cannot drive solve")
        options = TsnOptions(preset=args.preset, k=args.sparsity, scorer=args.scorer,
                             known_sparsity=args.known_sparsity)
        return AlgorithmConfig(name="tsn", tsn=options)
    return AlgorithmConfig(name=args.algorithm, baseline=BaselineOptions(kind=args.algorithm))


def estimate_frame(x_hat: np.ndarray) -> pd.DataFrame:
    """1-based index and value of every entry of the estimate"""
    return pd.DataFrame({
        "index": np.arange(1, x_hat.shape[0] + 1),
        "value": [format_entry(v) for v in x_hat],
    })


def solve_command(args: argparse.Namespace) -> int:
    phi = import_matrix_csv(args.matrix)
    y = import_vector_csv(args.measurement)
    m, n = phi.shape
    if y.shape[0] != m:
        raise InvalidArgumentError(f"measurement has {y.shape[0]} entries, matrix has {m} rows")
    if np.iscomplexobj(phi) or np.iscomplexobj(y):
        phi, y = phi.astype(np.complex128), y.astype(np.complex128)

    bounds = {"min_mag": args.min_mag} if args.min_mag is not None else {}
    distribution = SignalDistribution(kind=args.distribution, **bounds)
    runner = AlgorithmRunner(algorithm_config(args), m, n, args.sparsity, distribution, args.time_budget)
    support, x_hat = runner.solve(phi, y, args.snr, args.sparsity, seed=args.seed)

    path = out_dir(args) / args.output
    estimate_frame(x_hat).to_csv(path, index=False)
    logger.info(f"{args.algorithm}: |support|={len(support)}, residual={residual_norm(phi, support, y):.3e}")
    print("support:", " ".join(str(i + 1) for i in support))
    print(path)
    return 0
