import argparse
import logging

import numpy as np

from ...core.exceptions import InvalidArgumentError
from ...schemas.scorer_schema import ScorerJobConfig
from ...services.config_service import load_config
from ...services.ensemble_service import derive_seed, fixed_matrix, import_matrix_csv, make_rng
from ...services.model_service import load_model, persist_model
from ...services.scorer_service import (
    CorrelationScorer, OracleScorer, RandomScorer, ScorerSource, eval_scorer_sweep, train_scorer,
)
from ..options import add_out_dir, add_seed, add_snr, out_dir

logger = logging.getLogger(__name__)


def register(subparsers):
    train = subparsers.add_parser("train-scorer", help="train a learned index scorer, write it as JSON")
    train.add_argument("config", help="scorer job document (JSON, or TOML with a .toml suffix)")
    train.add_argument("--output", default="scorer.json", help="model file name under --out-dir")
    add_seed(train, default=None)
    add_out_dir(train)
    train.set_defaults(handler=train_scorer_command)

    evaluate = subparsers.add_parser("eval-scorer", help="support-overlap table of a scorer over a sparsity sweep")
    evaluate.add_argument("config", help="scorer job document giving the matrix and signal distribution")
    evaluate.add_argument("--scorer", default="correlation",
                          help="correlation, random, oracle or the path of a model JSON")
    evaluate.add_argument("--sparsity", type=int, nargs="+", required=True)
    evaluate.add_argument("--v", type=int, default=None, help="indices kept per score vector (default: s)")
    evaluate.add_argument("--trials", type=int, default=100)
    evaluate.add_argument("--output", default="scorer_eval.csv", help="table file name under --out-dir")
    add_snr(evaluate)
    add_seed(evaluate, default=None)
    add_out_dir(evaluate)
    evaluate.set_defaults(handler=eval_scorer_command)


def job_matrix(job: ScorerJobConfig) -> np.ndarray:
    if job.matrix_path is None:
        return fixed_matrix(job.ensemble, job.master_seed)
    phi = import_matrix_csv(job.matrix_path)
    if phi.shape != (job.ensemble.m, job.ensemble.n):
        raise InvalidArgumentError(
            f"matrix {job.matrix_path} has shape {phi.shape}, expected ({job.ensemble.m}, {job.ensemble.n})"
        )
    return phi


def resolve_scorer(name: str, phi: np.ndarray, rng: np.random.Generator) -> ScorerSource:
    if name == "correlation":
        return CorrelationScorer()
    if name == "random":
        return RandomScorer(rng)
    if name == "oracle":
        return lambda instance: OracleScorer(instance.support, instance.n)
    model = load_model(name)
    if (model.m, model.n) != phi.shape:
        raise InvalidArgumentError(f"scorer {name} was trained for {model.m}x{model.n}, matrix is {phi.shape}")
    return model


def train_scorer_command(args: argparse.Namespace) -> int:
    job = load_config(ScorerJobConfig, args.config, master_seed=args.seed)
    phi = job_matrix(job)
    model = train_scorer(phi, job.train, job.distribution, make_rng(derive_seed(job.master_seed, "train")))
    path = persist_model(model, out_dir(args) / args.output)
    for epoch, loss in enumerate(model.training_loss_trace, start=1):
        print(f"{epoch}\t{loss:.6e}")
    print(path)
    return 0


def eval_scorer_command(args: argparse.Namespace) -> int:
    job = load_config(ScorerJobConfig, args.config, master_seed=args.seed)
    phi = job_matrix(job)
    rng = make_rng(derive_seed(job.master_seed, "eval", args.snr))
    scorer = resolve_scorer(args.scorer, phi, rng)
    table = eval_scorer_sweep(scorer, phi, job.distribution, args.sparsity, args.v, args.trials, args.snr, rng)
    path = out_dir(args) / args.output
    table.to_csv(path, index=False)
    print(table.to_string(index=False))
    logger.info(f"Wrote scorer evaluation to {path}")
    return 0
