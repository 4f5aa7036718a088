"""Classical sparse-regression baselines: OMP, gOMP, SP, CoSaMP, IHT, MMP-DF and SBL.

Every algorithm finishes with least squares on its final support, so the returned
signal estimate always satisfies the normal equations on that support.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np

from ..core.config import (
    COSAMP_MAX_ITER, ETA2_FLOOR, IHT_MAX_ITER, SBL_BASELINE_MAX_ITER, SP_MAX_ITER, STAGNATION_TOL,
)
from ..core.exceptions import InvalidArgumentError
from ..schemas.baseline_schema import BaselineKind, BaselineSpec, RecoveryOutput
from ..schemas.ridge_schema import SblConfig
from .linalg_service import (
    IndexSet, ProjectionBasis, correlations, embed, least_squares, ranked_top_l, top_l,
)
from .ridge_service import sbl_ridge

logger = logging.getLogger(__name__)


def omp_path(phi: np.ndarray, y: np.ndarray, steps: int) -> Tuple[List[int], List[float]]:
    """Indices picked by OMP in selection order and the residual norm after each pick"""
    basis = ProjectionBasis.empty(phi.shape[0], dtype=np.result_type(phi.dtype, y.dtype))
    residual = y.copy()
    picked: List[int] = []
    norms: List[float] = []
    for _ in range(steps):
        (index,) = ranked_top_l(correlations(phi, residual), 1, exclude=picked)
        picked.append(index)
        basis = basis.extend(phi, index)
        residual = basis.project_out(y)
        norms.append(float(np.linalg.norm(residual)))
    return picked, norms


def _finish(phi: np.ndarray, y: np.ndarray, support: Sequence[int], iterations: int) -> RecoveryOutput:
    support = tuple(sorted(int(i) for i in support))
    coeffs, residual_norm = least_squares(phi, support, y)
    return RecoveryOutput(
        support_estimate=support,
        signal_estimate=embed(coeffs, support, phi.shape[1]),
        residual_norm=residual_norm,
        iterations=iterations,
    )


def _hard_threshold_support(x: np.ndarray, s: int) -> IndexSet:
    return top_l(x, s)


class BaselineRecovery:
    """Runs one baseline described by a BaselineSpec"""

    def __init__(self, spec: BaselineSpec):
        self.logger = logging.getLogger(__name__)
        self.spec = spec

    def recover(self, y: np.ndarray, phi: np.ndarray) -> RecoveryOutput:
        m, n = phi.shape
        s = self.spec.sparsity
        if y.shape != (m,):
            raise InvalidArgumentError(f"y has shape {y.shape}, expected ({m},)")
        if s > n:
            raise InvalidArgumentError(f"sparsity {s} exceeds n={n}")
        handlers = {
            BaselineKind.OMP: self.omp,
            BaselineKind.GOMP: self.gomp,
            BaselineKind.SP: self.subspace_pursuit,
            BaselineKind.COSAMP: self.cosamp,
            BaselineKind.IHT: self.iht,
            BaselineKind.MMP_DF: self.mmp,
            BaselineKind.SBL: self.sbl,
        }
        try:
            return handlers[self.spec.kind](y, phi)
        except Exception as e:
            self.logger.error(f"Error in {self.spec.kind.value} recovery (s={s}, m={m}, n={n}): {e}")
            raise

    def omp(self, y: np.ndarray, phi: np.ndarray) -> RecoveryOutput:
        s = self.spec.sparsity
        if s > phi.shape[0]:
            raise InvalidArgumentError(f"OMP needs s <= m, got s={s}, m={phi.shape[0]}")
        picked, _ = omp_path(phi, y, s)
        return _finish(phi, y, picked, s)

    def gomp(self, y: np.ndarray, phi: np.ndarray) -> RecoveryOutput:
        """Selects per_iteration indices a pass for at most min(s, m // per_iteration) passes.

        Stops early once the selection holds at least s indices and the least-squares residual
        is within epsilon; the s largest coefficients of the final fit form the estimate.
        """
        m, n = phi.shape
        s, per_iteration = self.spec.sparsity, self.spec.per_iteration
        iterations = max(1, min(s, m // per_iteration))
        selected: List[int] = []
        residual = y.copy()
        done = 0
        for done in range(1, iterations + 1):
            count = min(per_iteration, n - len(selected))
            selected.extend(ranked_top_l(correlations(phi, residual), count, exclude=selected))
            coeffs, residual_norm = least_squares(phi, selected, y)
            residual = y - phi[:, selected] @ coeffs
            if residual_norm <= self.spec.epsilon and len(selected) >= s:
                break
        coeffs, _ = least_squares(phi, selected, y)
        positions = ranked_top_l(coeffs, min(s, len(selected)))
        return _finish(phi, y, [selected[p] for p in positions], done)

    def subspace_pursuit(self, y: np.ndarray, phi: np.ndarray) -> RecoveryOutput:
        m, n = phi.shape
        s = self.spec.sparsity
        if 2 * s > m:
            raise InvalidArgumentError(f"subspace pursuit needs s <= m/2, got s={s}, m={m}")
        max_iter = self.spec.max_iter or SP_MAX_ITER
        support = top_l(correlations(phi, y), s)
        _, residual_norm = least_squares(phi, support, y)
        iterations = 0
        for iterations in range(1, max_iter + 1):
            coeffs, _ = least_squares(phi, support, y)
            residual = y - phi[:, list(support)] @ coeffs
            candidates = tuple(sorted(support + top_l(correlations(phi, residual), s, exclude=support)))
            merged, _ = least_squares(phi, candidates, y)
            new_support = tuple(sorted(candidates[p] for p in ranked_top_l(merged, s)))
            _, new_norm = least_squares(phi, new_support, y)
            if new_norm > residual_norm - STAGNATION_TOL:
                if new_norm < residual_norm:
                    support, residual_norm = new_support, new_norm
                break
            support, residual_norm = new_support, new_norm
        return _finish(phi, y, support, iterations)

    def cosamp(self, y: np.ndarray, phi: np.ndarray) -> RecoveryOutput:
        m, n = phi.shape
        s = self.spec.sparsity
        if 2 * s > m:
            raise InvalidArgumentError(f"CoSaMP needs s <= m/2, got s={s}, m={m}")
        max_iter = self.spec.max_iter or COSAMP_MAX_ITER
        support: IndexSet = ()
        residual = y.copy()
        residual_norm = float(np.linalg.norm(y))
        iterations = 0
        for iterations in range(1, max_iter + 1):
            proxy = top_l(correlations(phi, residual), min(2 * s, n - len(support)), exclude=support)
            merged = tuple(sorted(set(proxy) | set(support)))
            coeffs, _ = least_squares(phi, merged, y)
            new_support = tuple(sorted(merged[p] for p in ranked_top_l(coeffs, s)))
            kept = np.array([coeffs[merged.index(i)] for i in new_support])
            new_residual = y - phi[:, list(new_support)] @ kept
            new_norm = float(np.linalg.norm(new_residual))
            improved = new_norm < residual_norm - STAGNATION_TOL
            if new_norm <= residual_norm or not support:
                support, residual, residual_norm = new_support, new_residual, new_norm
            if not improved:
                break
        return _finish(phi, y, support, iterations)

    def iht(self, y: np.ndarray, phi: np.ndarray) -> RecoveryOutput:
        """Counts only the passes that lowered the residual, not the one that detects stagnation."""
        n = phi.shape[1]
        s = self.spec.sparsity
        max_iter = self.spec.max_iter or IHT_MAX_ITER
        x = np.zeros(n, dtype=np.result_type(phi.dtype, y.dtype))
        support: IndexSet = ()
        residual_norm = float(np.linalg.norm(y))
        iterations = 0
        for step in range(1, max_iter + 1):
            gradient_step = x + phi.conj().T @ (y - phi @ x)
            new_support = _hard_threshold_support(gradient_step, s)
            new_x = np.zeros_like(x)
            new_x[list(new_support)] = gradient_step[list(new_support)]
            new_norm = float(np.linalg.norm(y - phi @ new_x))
            if new_norm <= residual_norm or not support:
                support, x = new_support, new_x
            if residual_norm - new_norm < STAGNATION_TOL:
                break
            residual_norm = new_norm
            iterations = step
        return _finish(phi, y, support, max(iterations, 1))

    def mmp(self, y: np.ndarray, phi: np.ndarray) -> RecoveryOutput:
        return mmp_df(y, phi, self.spec.sparsity, self.spec.expansion, self.spec.n_max, self.spec.epsilon)

    def sbl(self, y: np.ndarray, phi: np.ndarray) -> RecoveryOutput:
        n = phi.shape[1]
        config = SblConfig(eta2=self.spec.eta2 or ETA2_FLOOR,
                           max_iter=self.spec.max_iter or SBL_BASELINE_MAX_ITER)
        solution = sbl_ridge(phi, tuple(range(n)), y, config)
        support = top_l(solution.coeffs, self.spec.sparsity)
        return _finish(phi, y, support, config.max_iter)


def mmp_df(y: np.ndarray, phi: np.ndarray, s: int, expansion: int, n_max: int = None,
           epsilon: float = 0.0) -> RecoveryOutput:
    """Depth-first multipath matching pursuit.

    Children of a path are its `expansion` best-correlated extensions, visited in rank order.
    A support reached twice is explored once. Stops at the first depth-s path with residual
    <= epsilon or after n_max distinct depth-s paths; returns the best depth-s path seen.
    """
    m, n = phi.shape
    if s < 1 or s > m - 1:
        raise InvalidArgumentError(f"MMP-DF needs 1 <= s <= m-1, got s={s}, m={m}")
    if n_max is None:
        n_max = expansion ** s
    dtype = np.result_type(phi.dtype, y.dtype)
    visited = set()
    stack = [ProjectionBasis.empty(m, dtype=dtype)]
    best_support: IndexSet = ()
    best_norm = np.inf
    full_paths = 0
    nodes = 0
    while stack and full_paths < n_max:
        basis = stack.pop()
        nodes += 1
        residual = basis.project_out(y)
        if len(basis.base_set) == s:
            full_paths += 1
            norm = float(np.linalg.norm(residual))
            if norm < best_norm:
                best_support, best_norm = basis.base_set, norm
            if norm <= epsilon:
                break
            continue
        width = min(expansion, n - len(basis.base_set))
        children = []
        for index in ranked_top_l(correlations(phi, residual), width, exclude=basis.base_set):
            child = tuple(sorted(basis.base_set + (index,)))
            if child in visited:
                continue
            visited.add(child)
            children.append(basis.extend(phi, index))
        stack.extend(reversed(children))
    logger.debug(f"MMP-DF evaluated {full_paths} full paths over {nodes} nodes, best residual {best_norm:.3e}")
    return _finish(phi, y, best_support, nodes)


def baseline_recover(spec: BaselineSpec, y: np.ndarray, phi: np.ndarray) -> RecoveryOutput:
    return BaselineRecovery(spec).recover(y, phi)
