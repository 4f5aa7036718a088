import logging
import math
from typing import Sequence, Tuple

import numpy as np
import scipy.linalg

from ..core.exceptions import InvalidArgumentError, NumericFailureError
from ..schemas.ridge_schema import RidgeSolution, SblConfig
from .linalg_service import IndexSet, least_squares, ranked_top_l

logger = logging.getLogger(__name__)


def _posterior_small(a: np.ndarray, y: np.ndarray, gamma: np.ndarray,
                     eta2: float) -> Tuple[np.ndarray, np.ndarray, float]:
    """Posterior mean, posterior variances and evidence cost via the |support| x |support| system"""
    m, k = a.shape
    aty = a.conj().T @ y
    system = a.conj().T @ a + np.diag(eta2 / gamma)
    factor = scipy.linalg.cho_factor(system, lower=True, check_finite=True)
    mu = scipy.linalg.cho_solve(factor, aty)
    inverse = scipy.linalg.cho_solve(factor, np.eye(k, dtype=system.dtype))
    variances = eta2 * np.real(np.diag(inverse))
    log_det = 2.0 * float(np.sum(np.log(np.real(np.diag(factor[0])))))
    quad = (float(np.vdot(y, y).real) - float(np.vdot(aty, mu).real)) / eta2
    cost = (m - k) * math.log(eta2) + float(np.sum(np.log(gamma))) + log_det + quad
    return mu, variances, cost


def _posterior_wide(a: np.ndarray, y: np.ndarray, gamma: np.ndarray,
                    eta2: float) -> Tuple[np.ndarray, np.ndarray, float]:
    """Same quantities through the m x m covariance eta2 I + A D(gamma) A^*"""
    m = a.shape[0]
    a_gamma = a * gamma
    covariance = eta2 * np.eye(m, dtype=a.dtype) + a_gamma @ a.conj().T
    factor = scipy.linalg.cho_factor(covariance, lower=True, check_finite=True)
    c_inv_y = scipy.linalg.cho_solve(factor, y)
    mu = a_gamma.conj().T @ c_inv_y
    c_inv_a_gamma = scipy.linalg.cho_solve(factor, a_gamma)
    variances = gamma - np.real(np.sum(a_gamma.conj() * c_inv_a_gamma, axis=0))
    log_det = 2.0 * float(np.sum(np.log(np.real(np.diag(factor[0])))))
    cost = log_det + float(np.vdot(y, c_inv_y).real)
    return mu, variances, cost


def sbl_ridge(phi: np.ndarray, support: Sequence[int], y: np.ndarray, config: SblConfig) -> RidgeSolution:
    """Ridge regression on phi[:, support] with SBL-fitted prior variances and fixed eta2.

    The noiseless configuration degenerates to minimum-norm least squares.
    """
    support = tuple(support)
    if not support:
        raise InvalidArgumentError("ridge regression needs a non-empty support")
    if config.noiseless:
        coeffs, _ = least_squares(phi, support, y)
        gamma = np.maximum(np.abs(coeffs) ** 2, config.gamma_floor)
        return RidgeSolution(support=support, coeffs=coeffs, gamma=gamma, cost_trace=[])
    if config.eta2 <= 0:
        raise InvalidArgumentError("eta2 must be positive unless the configuration is noiseless")

    a = phi[:, list(support)]
    posterior = _posterior_small if a.shape[1] <= a.shape[0] else _posterior_wide
    gamma = np.full(len(support), float(config.gamma_init))
    cost_trace = []
    for iteration in range(config.max_iter + 1):
        try:
            mu, variances, cost = posterior(a, y, gamma, config.eta2)
        except (np.linalg.LinAlgError, ValueError) as e:
            logger.error(f"Error in sbl_ridge at iteration {iteration} on support {support}: {e}")
            raise NumericFailureError(f"singular SBL system: {e}", support=support, iteration=iteration) from e
        if not (np.all(np.isfinite(mu)) and math.isfinite(cost)):
            raise NumericFailureError("non-finite SBL posterior", support=support, iteration=iteration)
        cost_trace.append(cost)
        if iteration == config.max_iter:
            break
        gamma = np.maximum(np.abs(mu) ** 2 + np.maximum(variances, 0.0), config.gamma_floor)
    return RidgeSolution(support=support, coeffs=mu, gamma=gamma, cost_trace=cost_trace)


def k_support_select(solution: RidgeSolution, k: int) -> IndexSet:
    """The k members of the solved support with largest |coeff|"""
    if k > len(solution.support):
        raise InvalidArgumentError(f"k={k} exceeds |support|={len(solution.support)}")
    positions = ranked_top_l(np.abs(solution.coeffs), k)
    return tuple(sorted(solution.support[p] for p in positions))
