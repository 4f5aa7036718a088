"""Monte-Carlo recovery experiments: paired instances, per-trial metrics, summaries and s_0.95.

Every algorithm in a cell sees the same instance for a given trial index. Rows are sorted
before they are returned, so worker scheduling never changes the output.
"""
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..core.config import CSV_FORMAT_VERSION, ETA2_FLOOR, MMP_TRUNCATED_PATHS, S95_THRESHOLD, VERSION
from ..core.exceptions import InvalidArgumentError
from ..schemas.baseline_schema import BaselineKind, BaselineSpec
from ..schemas.bench_schema import AlgorithmConfig, ExperimentConfig, SummaryRow, TrialMetrics
from ..schemas.problem_schema import ProblemInstance, SignalDistribution
from ..schemas.ridge_schema import SblConfig
from ..schemas.tsn_schema import TsnParams
from .baseline_service import baseline_recover
from .ensemble_service import (
    derive_seed, fixed_matrix, import_matrix_csv, instance_checksum, make_instance, make_rng,
)
from .model_service import load_model
from .scorer_service import CorrelationScorer, IndexScorer, MlpScorer, OracleScorer, RandomScorer
from .treesearch_service import error_bound, tsn

logger = logging.getLogger(__name__)

TRIAL_COLUMNS = list(TrialMetrics.model_fields)
SUMMARY_COLUMNS = list(SummaryRow.model_fields)
TIMING_COLUMNS = ["wall_seconds", "mean_wall_seconds"]


def fit_to_sparsity(params: TsnParams, k: int) -> TsnParams:
    """Drop trailing stage depth until the stages fit within k levels"""
    depths, widths, total = [], [], 0
    for depth, width in zip(params.stage_depths, params.stage_widths):
        if total >= k:
            break
        depths.append(min(depth, k - total))
        widths.append(width)
        total += depths[-1]
    if not depths:
        raise InvalidArgumentError(f"no tree stage fits within k={k}")
    return params.model_copy(update={"stage_depths": depths, "stage_widths": widths})


def noise_parameter(y: np.ndarray, snr_db: float) -> float:
    """eta2 for SBL-based recovery; noiseless problems use the floor"""
    if math.isinf(snr_db) and snr_db > 0:
        return ETA2_FLOOR
    return SblConfig.from_snr(y, snr_db).eta2


class AlgorithmRunner:
    """Turns one AlgorithmConfig into a callable on problem instances"""

    def __init__(self, algorithm: AlgorithmConfig, m: int, n: int, sweep_max: int,
                 distribution: SignalDistribution, time_budget: Optional[float] = None):
        self.logger = logging.getLogger(__name__)
        self.algorithm = algorithm
        self.m = m
        self.n = n
        self.sweep_max = sweep_max
        self.distribution = distribution
        self._model: Optional[MlpScorer] = None
        self.params: Optional[TsnParams] = None
        if algorithm.tsn is not None:
            options = algorithm.tsn
            params = options.params if options.params is not None else TsnParams.preset(options.preset, m, n)
            if time_budget is not None:
                params = params.model_copy(update={"t_max": time_budget})
            self.params = params
            if options.scorer not in ("correlation", "random", "oracle"):
                self._model = load_model(options.scorer)
                if (self._model.m, self._model.n) != (m, n):
                    raise InvalidArgumentError(
                        f"scorer {options.scorer} was trained for {self._model.m}x{self._model.n}, "
                        f"experiment uses {m}x{n}"
                    )

    @property
    def name(self) -> str:
        return self.algorithm.name

    @property
    def uses_model(self) -> bool:
        return self._model is not None

    def scorer_for(self, instance: ProblemInstance, seed: int) -> IndexScorer:
        kind = self.algorithm.tsn.scorer
        if self._model is not None:
            return self._model
        if kind == "random":
            return RandomScorer(make_rng(derive_seed(seed, self.name, "scorer")))
        if kind == "oracle":
            return OracleScorer(instance.support, instance.n)
        return CorrelationScorer()

    def solve(self, phi: np.ndarray, y: np.ndarray, snr_db: float, sparsity: int,
              instance: Optional[ProblemInstance] = None, seed: int = 0) -> Tuple[Tuple[int, ...], np.ndarray]:
        """(support estimate, signal estimate) for one measurement"""
        n = phi.shape[1]
        zero = np.zeros(n, dtype=np.result_type(phi.dtype, y.dtype))
        if self.algorithm.baseline is not None:
            if sparsity == 0:
                return (), zero
            options = self.algorithm.baseline
            knobs = {key: value for key, value in options.model_dump(exclude={"kind"}).items() if value is not None}
            if options.kind is BaselineKind.MMP_DF:
                knobs.setdefault("n_max", MMP_TRUNCATED_PATHS)
            spec = BaselineSpec(
                kind=options.kind,
                sparsity=sparsity,
                **knobs,
                epsilon=error_bound(y, snr_db),
                eta2=noise_parameter(y, snr_db),
            )
            output = baseline_recover(spec, y, phi)
            return output.support_estimate, output.signal_estimate

        options = self.algorithm.tsn
        k = sparsity if options.known_sparsity else (options.k if options.k is not None else self.sweep_max)
        if k == 0:
            return (), zero
        k = min(k, self.m - 2)
        params = fit_to_sparsity(self.params, k)
        if instance is None:
            instance = ProblemInstance(phi=phi, x0=zero, support=(), w=np.zeros_like(y), y=y, snr_db=snr_db)
        result = tsn(y, phi, k, params, self.scorer_for(instance, seed),
                     ridge_cfg=SblConfig.from_snr(y, snr_db),
                     distribution=self.distribution, snr_db=snr_db,
                     known_sparsity=options.known_sparsity)
        return result.support_estimate, result.signal_estimate


def trial_metrics(algorithm: str, instance: ProblemInstance, support: Tuple[int, ...], x_hat: np.ndarray,
                  trial: int, checksum: str, exact_tol: float, wall_seconds: float) -> TrialMetrics:
    x0 = instance.x0
    x0_norm = float(np.linalg.norm(x0))
    error = float(np.linalg.norm(x_hat - x0))
    if instance.sparsity == 0:
        rel_error = error
        exact = error == 0.0
    else:
        rel_error = error / x0_norm
        exact = rel_error <= exact_tol
    clean = instance.phi @ x0
    fit_error = float(np.linalg.norm(instance.phi @ x_hat - clean))
    noise_norm = float(np.linalg.norm(instance.w))
    noise_floor = exact_tol * float(np.linalg.norm(clean))
    noise_bound = fit_error <= max(noise_norm, noise_floor)
    true_support = set(instance.support)
    return TrialMetrics(
        algorithm=algorithm,
        sparsity=instance.sparsity,
        snr_db=instance.snr_db,
        trial=trial,
        seed=instance.seed,
        instance_checksum=checksum,
        exact_recovery=exact,
        support_recovery=set(support) == true_support,
        rel_error=rel_error,
        noise_bound_success=noise_bound,
        noise_bound_rule="noise_norm" if noise_norm >= noise_floor else "exact_tol",
        support_overlap=len(true_support.intersection(support)) / max(len(true_support), 1),
        support_size=len(support),
        wall_seconds=wall_seconds,
    )


class ExperimentRunner:
    """Runs an ExperimentConfig over a thread pool of trial workers"""

    def __init__(self, config: ExperimentConfig):
        self.logger = logging.getLogger(__name__)
        self.config = config
        ensemble = config.ensemble
        self.runners = [
            AlgorithmRunner(a, ensemble.m, ensemble.n, max(config.sparsity_range), config.distribution,
                            config.time_budget)
            for a in config.algorithms
        ]
        self.fixed_phi = self._fixed_matrix()
        if self.fixed_phi is None and any(r.uses_model for r in self.runners):
            self.logger.warning("Learned scorers are trained for one matrix; consider matrix_mode='fixed'")

    def _fixed_matrix(self) -> Optional[np.ndarray]:
        config = self.config
        if config.matrix_mode != "fixed":
            return None
        if config.matrix_path is not None:
            phi = import_matrix_csv(config.matrix_path)
            if phi.shape != (config.ensemble.m, config.ensemble.n):
                raise InvalidArgumentError(
                    f"matrix {config.matrix_path} has shape {phi.shape}, expected "
                    f"({config.ensemble.m}, {config.ensemble.n})"
                )
            return phi
        return fixed_matrix(config.ensemble, config.master_seed)

    def run_trial(self, snr_db: float, sparsity: int, trial: int) -> List[TrialMetrics]:
        config = self.config
        seed = derive_seed(config.master_seed, snr_db, sparsity, trial)
        instance = make_instance(config.ensemble, config.distribution, sparsity, snr_db, seed, phi=self.fixed_phi)
        checksum = instance_checksum(instance)
        rows = []
        for runner in self.runners:
            started = time.perf_counter()
            try:
                support, x_hat = runner.solve(instance.phi, instance.y, snr_db, sparsity, instance, seed)
            except Exception as e:
                self.logger.error(f"Error in {runner.name} on snr={snr_db}, s={sparsity}, trial={trial}: {e}")
                raise
            rows.append(trial_metrics(runner.name, instance, support, x_hat, trial, checksum,
                                      config.exact_tol, time.perf_counter() - started))
        return rows

    def run(self) -> Tuple[pd.DataFrame, pd.DataFrame]:
        config = self.config
        tasks = [(snr, s, t) for snr in config.snr_levels for s in config.sparsity_range for t in range(config.trials)]
        self.logger.info(
            f"Running {len(tasks)} instances x {len(self.runners)} algorithms "
            f"({config.ensemble.kind.value} {config.ensemble.m}x{config.ensemble.n}, workers={config.workers})"
        )
        rows: List[TrialMetrics] = []
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            for cell_rows in executor.map(lambda task: self.run_trial(*task), tasks):
                rows.extend(cell_rows)
        order = {runner.name: i for i, runner in enumerate(self.runners)}
        rows.sort(key=lambda r: (order[r.algorithm], r.snr_db, r.sparsity, r.trial))
        trials = pd.DataFrame([r.model_dump() for r in rows], columns=TRIAL_COLUMNS)
        summary = summarize_trials(trials)
        for row in summary.itertuples(index=False):
            self.logger.info(
                f"{row.algorithm} snr={row.snr_db} s={row.sparsity}: recovery={row.recovery_rate:.3f}, "
                f"rel_error={row.mean_rel_error:.3e}"
            )
        return trials, summary


def run_experiment(config: ExperimentConfig) -> Tuple[pd.DataFrame, pd.DataFrame]:
    return ExperimentRunner(config).run()


def summarize_trials(trials: pd.DataFrame) -> pd.DataFrame:
    """Per (algorithm, snr, sparsity) means of the trial table, in first-appearance order"""
    grouped = trials.groupby(["algorithm", "snr_db", "sparsity"], sort=False)
    summary = grouped.agg(
        mean_rel_error=("rel_error", "mean"),
        recovery_rate=("exact_recovery", "mean"),
        support_rate=("support_recovery", "mean"),
        noise_bound_rate=("noise_bound_success", "mean"),
        mean_overlap=("support_overlap", "mean"),
        mean_wall_seconds=("wall_seconds", "mean"),
        trials=("trial", "count"),
    ).reset_index()
    return summary[SUMMARY_COLUMNS]


def summarize_s95(summary: pd.DataFrame, threshold: float = S95_THRESHOLD) -> int:
    """Largest s with recovery rate >= threshold at every sparsity 1..s; 0 if none"""
    rows = summary[summary["sparsity"] >= 1].sort_values("sparsity")
    if rows.empty:
        raise InvalidArgumentError("summary has no rows with sparsity >= 1")
    best = 0
    for sparsity, rate in zip(rows["sparsity"], rows["recovery_rate"]):
        if sparsity != best + 1 or rate < threshold:
            break
        best = int(sparsity)
    return best


def s95_table(summary: pd.DataFrame, threshold: float = S95_THRESHOLD) -> pd.DataFrame:
    rows = []
    for (algorithm, snr_db), group in summary.groupby(["algorithm", "snr_db"], sort=False):
        rows.append({"algorithm": algorithm, "snr_db": snr_db, "s95": summarize_s95(group, threshold)})
    return pd.DataFrame(rows, columns=["algorithm", "snr_db", "s95"])


def write_results(out_dir: Union[str, Path], config: ExperimentConfig, trials: pd.DataFrame,
                  summary: pd.DataFrame, started: datetime, finished: datetime) -> Dict[str, Path]:
    """trials.csv, summary.csv, s95.csv and manifest.json under out_dir"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "trials": out_dir / "trials.csv",
        "summary": out_dir / "summary.csv",
        "s95": out_dir / "s95.csv",
        "manifest": out_dir / "manifest.json",
    }
    trials.to_csv(paths["trials"], index=False)
    summary.to_csv(paths["summary"], index=False)
    s95_table(summary).to_csv(paths["s95"], index=False)
    manifest = {
        "version": VERSION,
        "csvFormatVersion": CSV_FORMAT_VERSION,
        "startedAt": started.isoformat(),
        "finishedAt": finished.isoformat(),
        "trialRows": len(trials),
        "summaryRows": len(summary),
        "config": config.model_dump(mode="json"),
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    logger.info(f"Wrote {len(trials)} trial rows and {len(summary)} summary rows to {out_dir}")
    return paths


def run_and_write(config: ExperimentConfig, out_dir: Union[str, Path]) -> Dict[str, Path]:
    started = datetime.now(timezone.utc)
    trials, summary = run_experiment(config)
    return write_results(out_dir, config, trials, summary, started, datetime.now(timezone.utc))


def deterministic_view(trials: pd.DataFrame) -> pd.DataFrame:
    """Trial table without timing columns"""
    return trials.drop(columns=[c for c in TIMING_COLUMNS if c in trials.columns])
