"""Index scorers: maps from a residual to a probability vector over the columns of phi.

The correlation scorer reproduces OMP's selection rule. The feed-forward scorer is trained
online on synthetic measurements and persisted by model_service.
"""
import logging
import math
from abc import ABC, abstractmethod
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from ..core.config import HIDDEN_WIDTH_FACTOR, LOG_FLOOR
from ..core.exceptions import InvalidArgumentError, NumericFailureError
from ..schemas.problem_schema import ProblemInstance, ScalarField, SignalDistribution
from ..schemas.scorer_schema import Activation, ScorerEvaluation, TrainConfig
from .ensemble_service import gen_signal, gen_training_set, measure
from .linalg_service import as_index_set, correlations, top_l

logger = logging.getLogger(__name__)


class IndexScorer(ABC):
    """Residual -> simplex vector of length n"""

    @abstractmethod
    def score(self, phi: np.ndarray, residual: np.ndarray) -> np.ndarray:
        ...

    def _check(self, phi: np.ndarray, residual: np.ndarray):
        if residual.shape != (phi.shape[0],):
            raise InvalidArgumentError(f"residual has shape {residual.shape}, expected ({phi.shape[0]},)")


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


class CorrelationScorer(IndexScorer):
    """v_i = |(phi^* r)_i| / sum_j |(phi^* r)_j|"""

    def score(self, phi: np.ndarray, residual: np.ndarray) -> np.ndarray:
        self._check(phi, residual)
        c = correlations(phi, residual)
        total = c.sum()
        if total == 0 or not np.isfinite(total):
            return _uniform(phi.shape[1])
        return c / total


class OracleScorer(IndexScorer):
    """Uniform mass on a known support; ignores the residual"""

    def __init__(self, support: Sequence[int], n: int):
        self.support = as_index_set(support, n)
        self.n = n

    def score(self, phi: np.ndarray, residual: np.ndarray) -> np.ndarray:
        self._check(phi, residual)
        if not self.support:
            return _uniform(self.n)
        v = np.zeros(self.n)
        v[list(self.support)] = 1.0 / len(self.support)
        return v


class RandomScorer(IndexScorer):
    """A fresh uniform-random simplex vector on each call, for chance-level comparisons"""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def score(self, phi: np.ndarray, residual: np.ndarray) -> np.ndarray:
        self._check(phi, residual)
        v = self.rng.random(phi.shape[1])
        return v / v.sum()


def residual_features(residuals: np.ndarray) -> np.ndarray:
    """Unit-normalized network inputs, one row per residual; complex parts are stacked"""
    r = np.atleast_2d(residuals)
    if np.iscomplexobj(r):
        r = np.concatenate([r.real, r.imag], axis=1)
    r = np.asarray(r, dtype=np.float64)
    norms = np.linalg.norm(r, axis=1, keepdims=True)
    return np.divide(r, norms, out=np.zeros_like(r), where=norms > 0)


def support_targets(supports: Sequence[Sequence[int]], n: int) -> np.ndarray:
    """Rows with 1/|support| on the support and zero elsewhere"""
    targets = np.zeros((len(supports), n))
    for row, support in enumerate(supports):
        if len(support):
            targets[row, list(support)] = 1.0 / len(support)
    return targets


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(z: np.ndarray, a: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return (z > 0).astype(np.float64)
    return 1.0 - a ** 2


class MlpScorer(IndexScorer):
    """Feed-forward network with softmax output.

    weights[l] has shape (out, in); biases[l] has shape (out,).
    """

    def __init__(self, field: ScalarField, m: int, n: int, weights: List[np.ndarray],
                 biases: List[np.ndarray], activations: List[Activation]):
        if len(weights) != len(biases) or len(weights) != len(activations) + 1:
            raise InvalidArgumentError("need one activation per hidden layer and one weight/bias pair per layer")
        self.field = field
        self.m = m
        self.n = n
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activations = [Activation(a) for a in activations]
        self.training_loss_trace: List[float] = []
        self.train_config: Optional[TrainConfig] = None
        if self.weights[0].shape[1] != self.input_dim or self.weights[-1].shape[0] != n:
            raise InvalidArgumentError(f"layer shapes do not map {self.input_dim} inputs to {n} outputs")

    @property
    def input_dim(self) -> int:
        return 2 * self.m if self.field is ScalarField.COMPLEX else self.m

    @property
    def layer_dims(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @classmethod
    def initialize(cls, field: ScalarField, m: int, n: int, rng: np.random.Generator,
                   hidden_widths: Optional[List[int]] = None,
                   activations: Optional[List[Activation]] = None) -> "MlpScorer":
        """He initialization ahead of rectifiers, Xavier ahead of tanh and the output layer"""
        activations = [Activation(a) for a in (activations or [Activation.RELU, Activation.RELU])]
        if hidden_widths is None:
            hidden_widths = [HIDDEN_WIDTH_FACTOR * m] * len(activations)
        input_dim = 2 * m if field is ScalarField.COMPLEX else m
        dims = [input_dim] + list(hidden_widths) + [n]
        weights, biases = [], []
        for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            relu_next = layer < len(activations) and activations[layer] is Activation.RELU
            scale = math.sqrt((2.0 if relu_next else 1.0) / fan_in)
            weights.append(rng.standard_normal((fan_out, fan_in)) * scale)
            biases.append(np.zeros(fan_out))
        return cls(field, m, n, weights, biases, activations)

    def _forward(self, features: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
        pre, post = [], [features]
        a = features
        for w, b, activation in zip(self.weights[:-1], self.biases[:-1], self.activations):
            z = a @ w.T + b
            a = _activate(z, activation)
            pre.append(z)
            post.append(a)
        logits = a @ self.weights[-1].T + self.biases[-1]
        return pre, post, logits

    def log_probabilities(self, features: np.ndarray) -> np.ndarray:
        _, _, logits = self._forward(features)
        return logits - logsumexp(logits, axis=1, keepdims=True)

    def score(self, phi: np.ndarray, residual: np.ndarray) -> np.ndarray:
        self._check(phi, residual)
        if phi.shape[1] != self.n:
            raise InvalidArgumentError(f"scorer was built for n={self.n}, matrix has n={phi.shape[1]}")
        return np.exp(self.log_probabilities(residual_features(residual)))[0]

    def loss_and_gradients(self, features: np.ndarray,
                           targets: np.ndarray) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
        """Batch mean of ce(softmax, target) with ce(a, b) = -(1/n) sum b_i log a_i, and its gradients"""
        batch = features.shape[0]
        pre, post, logits = self._forward(features)
        log_p = logits - logsumexp(logits, axis=1, keepdims=True)
        loss = float(-(targets * np.maximum(log_p, math.log(LOG_FLOOR))).sum() / (self.n * batch))

        p = np.exp(log_p)
        delta = (p * targets.sum(axis=1, keepdims=True) - targets) / (self.n * batch)
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            grad_w[layer] = delta.T @ post[layer]
            grad_b[layer] = delta.sum(axis=0)
            if layer > 0:
                back = delta @ self.weights[layer]
                delta = back * _activation_grad(pre[layer - 1], post[layer], self.activations[layer - 1])
        return loss, grad_w, grad_b

    def parameters_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.weights + self.biases)


class ScorerTrainer:
    """Online training of an MlpScorer on freshly synthesized measurements every epoch"""

    def __init__(self, phi: np.ndarray, config: TrainConfig, dist: SignalDistribution,
                 rng: np.random.Generator):
        self.logger = logging.getLogger(__name__)
        self.phi = phi
        self.config = config
        self.dist = dist
        self.rng = rng
        self.updates = 0
        field = ScalarField.COMPLEX if np.iscomplexobj(phi) else ScalarField.REAL
        m, n = phi.shape
        self.scorer = MlpScorer.initialize(field, m, n, rng, config.hidden_widths, config.activations)
        self._cache_w = [np.zeros_like(w) for w in self.scorer.weights]
        self._cache_b = [np.zeros_like(b) for b in self.scorer.biases]

    def _rmsprop(self, params: List[np.ndarray], grads: List[np.ndarray], caches: List[np.ndarray], rate: float):
        decay, damping = self.config.adaptive_decay, self.config.adaptive_epsilon
        for param, grad, cache in zip(params, grads, caches):
            cache *= decay
            cache += (1.0 - decay) * grad ** 2
            param -= rate * grad / (np.sqrt(cache) + damping)

    def run_epoch(self, epoch: int) -> float:
        config = self.config
        samples = gen_training_set(self.phi, config.k1, config.k2, config.v_snr_db, self.dist, config.s_d, self.rng)
        features = residual_features(np.stack([sample.y for sample in samples]))
        targets = support_targets([sample.support for sample in samples], self.scorer.n)
        rate = config.rate_for_epoch(epoch)
        losses = []
        for batch, start in enumerate(range(0, config.s_d, config.s_b), start=1):
            stop = start + config.s_b
            loss, grad_w, grad_b = self.scorer.loss_and_gradients(features[start:stop], targets[start:stop])
            if not math.isfinite(loss):
                self.logger.error(f"Non-finite training loss at epoch {epoch}, batch {batch}")
                raise NumericFailureError(f"non-finite loss at epoch {epoch}, batch {batch}",
                                          epoch=epoch, batch=batch)
            self._rmsprop(self.scorer.weights, grad_w, self._cache_w, rate)
            self._rmsprop(self.scorer.biases, grad_b, self._cache_b, rate)
            self.updates += 1
            losses.append(loss)
        if not self.scorer.parameters_finite():
            raise NumericFailureError(f"non-finite parameters after epoch {epoch}", epoch=epoch, batch=len(losses))
        return float(np.mean(losses))

    def train(self) -> MlpScorer:
        self.logger.info(
            f"Training scorer m={self.scorer.m}, n={self.scorer.n}, layers={self.scorer.layer_dims}, "
            f"epochs={self.config.n_e}, s_d={self.config.s_d}, s_b={self.config.s_b}"
        )
        trace = []
        for epoch in range(1, self.config.n_e + 1):
            epoch_loss = self.run_epoch(epoch)
            trace.append(epoch_loss)
            self.logger.info(f"Epoch {epoch}/{self.config.n_e}: loss={epoch_loss:.6e}")
        self.scorer.training_loss_trace = trace
        self.scorer.train_config = self.config
        return self.scorer


def train_scorer(phi: np.ndarray, config: TrainConfig, dist: SignalDistribution,
                 rng: np.random.Generator) -> MlpScorer:
    return ScorerTrainer(phi, config, dist, rng).train()


ScorerSource = Union[IndexScorer, Callable[[ProblemInstance], IndexScorer]]


def eval_scorer(scorer: ScorerSource, phi: np.ndarray, dist: SignalDistribution, s: int, v: int,
                trials: int, snr_db: float, rng: np.random.Generator) -> ScorerEvaluation:
    """Mean |support ∩ top_v(score(y))| / |support| and the rate of full containment.

    scorer may be a callable building a scorer per instance (the oracle scorer needs the support).
    """
    n = phi.shape[1]
    if not 1 <= v <= n or s < 1:
        raise InvalidArgumentError(f"need 1 <= v <= n and s >= 1, got v={v}, s={s}, n={n}")
    overlaps = np.empty(trials)
    contained = np.empty(trials, dtype=bool)
    for trial in range(trials):
        x0, support = gen_signal(dist, n, s, rng)
        if np.iscomplexobj(phi):
            x0 = x0.astype(np.complex128)
        y, w = measure(phi, x0, snr_db, rng)
        if isinstance(scorer, IndexScorer):
            current = scorer
        else:
            current = scorer(ProblemInstance(phi=phi, x0=x0, support=support, w=w, y=y, snr_db=snr_db))
        estimate = set(top_l(current.score(phi, y), v))
        hits = len(estimate.intersection(support))
        overlaps[trial] = hits / len(support)
        contained[trial] = hits == len(support)
    return ScorerEvaluation(sparsity=s, v=v, trials=trials, snr_db=snr_db,
                            mean_overlap=float(overlaps.mean()), containment_rate=float(contained.mean()))


def eval_scorer_sweep(scorer: ScorerSource, phi: np.ndarray, dist: SignalDistribution,
                      sparsities: Sequence[int], v: Optional[int], trials: int, snr_db: float,
                      rng: np.random.Generator) -> pd.DataFrame:
    """One evaluation row per sparsity; v=None scores containment at v = s"""
    rows = []
    for s in sparsities:
        result = eval_scorer(scorer, phi, dist, s, v if v is not None else s, trials, snr_db, rng)
        logger.info(f"s={s}, v={result.v}: overlap={result.mean_overlap:.4f}, containment={result.containment_rate:.4f}")
        rows.append(result.model_dump(mode="json"))
    return pd.DataFrame(rows, columns=list(ScorerEvaluation.model_fields))
