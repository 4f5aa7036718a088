"""Dense kernels shared by every recovery algorithm.

Index sets are sorted tuples of 0-based column indices. Real and complex inputs go
through the same code; conjugate transposes are used throughout.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..core.config import RANK_TOL
from ..core.exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

IndexSet = Tuple[int, ...]


def as_index_set(indices: Iterable[int], n: Optional[int] = None) -> IndexSet:
    """Sorted, duplicate-free tuple of ints, optionally checked against {0..n-1}"""
    result = tuple(sorted({int(i) for i in indices}))
    if n is not None and result and (result[0] < 0 or result[-1] >= n):
        raise InvalidArgumentError(f"index set {result} is outside 0..{n - 1}")
    return result


def ranked_top_l(v: np.ndarray, l: int, exclude: Sequence[int] = ()) -> Tuple[int, ...]:
    """The l indices outside exclude with largest |v_i|, in rank order (ties to the smaller index)"""
    scores = np.abs(np.asarray(v))
    n = scores.shape[0]
    available = np.ones(n, dtype=bool)
    if len(exclude):
        available[list(exclude)] = False
    candidates = np.flatnonzero(available)
    if l < 0 or l > candidates.size:
        raise InvalidArgumentError(f"cannot select {l} indices, only {candidates.size} available")
    if l == 0:
        return ()
    order = np.argsort(-scores[candidates], kind="stable")[:l]
    return tuple(int(i) for i in candidates[order])


def top_l(v: np.ndarray, l: int, exclude: Sequence[int] = ()) -> IndexSet:
    """T_l: the l largest-magnitude indices outside exclude, returned sorted"""
    return tuple(sorted(ranked_top_l(v, l, exclude)))


@dataclass(frozen=True)
class ProjectionBasis:
    """Orthonormal basis of range(phi[:, base_set]); dependent columns contribute nothing"""
    base_set: IndexSet
    columns: np.ndarray  # m x rank

    @property
    def rank(self) -> int:
        return self.columns.shape[1]

    @classmethod
    def empty(cls, m: int, dtype=np.float64) -> "ProjectionBasis":
        return cls(base_set=(), columns=np.zeros((m, 0), dtype=dtype))

    def project_out(self, v: np.ndarray) -> np.ndarray:
        if self.rank == 0:
            return v.copy()
        q = self.columns
        return v - q @ (q.conj().T @ v)

    def extend(self, phi: np.ndarray, index: int) -> "ProjectionBasis":
        """New basis for base_set + {index}; classical Gram-Schmidt with one re-orthogonalization pass"""
        if index in self.base_set:
            return self
        column = phi[:, index]
        original = np.linalg.norm(column)
        u = self.project_out(column)
        u = self.project_out(u)
        norm = np.linalg.norm(u)
        new_set = tuple(sorted(self.base_set + (index,)))
        if original == 0 or norm < RANK_TOL * original:
            logger.debug(f"Column {index} is dependent on {self.base_set}, skipped in basis")
            return ProjectionBasis(base_set=new_set, columns=self.columns)
        dtype = np.result_type(self.columns.dtype, u.dtype)
        columns = np.empty((self.columns.shape[0], self.rank + 1), dtype=dtype)
        columns[:, :self.rank] = self.columns
        columns[:, self.rank] = u / norm
        return ProjectionBasis(base_set=new_set, columns=columns)

    @classmethod
    def build(cls, phi: np.ndarray, support: Sequence[int]) -> "ProjectionBasis":
        basis = cls.empty(phi.shape[0], dtype=phi.dtype)
        for index in support:
            basis = basis.extend(phi, index)
        return basis


def residual_project(phi: np.ndarray, support: Sequence[int], y: np.ndarray,
                     basis: Optional[ProjectionBasis] = None) -> Tuple[np.ndarray, ProjectionBasis]:
    """Component of y orthogonal to range(phi[:, support]) and the basis that produced it.

    A basis for a subset of support can be passed in; only the missing columns are added.
    """
    support = tuple(support)
    if len(support) > phi.shape[0]:
        raise InvalidArgumentError(f"|support|={len(support)} exceeds m={phi.shape[0]}")
    if basis is None or not set(basis.base_set).issubset(support):
        basis = ProjectionBasis.empty(phi.shape[0], dtype=phi.dtype)
    for index in support:
        if index not in basis.base_set:
            basis = basis.extend(phi, index)
    return basis.project_out(y), basis


def least_squares(phi: np.ndarray, support: Sequence[int], y: np.ndarray) -> Tuple[np.ndarray, float]:
    """Minimum-norm minimizer of ||phi[:, support] c - y|| and the attained residual norm"""
    support = list(support)
    if not support:
        return np.zeros(0, dtype=np.result_type(phi.dtype, y.dtype)), float(np.linalg.norm(y))
    a = phi[:, support]
    coeffs, _, _, _ = scipy.linalg.lstsq(a, y, lapack_driver="gelsy", check_finite=False)
    residual_norm = float(np.linalg.norm(y - a @ coeffs))
    return coeffs, residual_norm


def residual_norm(phi: np.ndarray, support: Sequence[int], y: np.ndarray) -> float:
    return least_squares(phi, support, y)[1]


def embed(coeffs: np.ndarray, support: Sequence[int], n: int) -> np.ndarray:
    """Scatter coefficients on support into a length-n vector"""
    x = np.zeros(n, dtype=np.result_type(coeffs.dtype, np.float64))
    if len(support):
        x[list(support)] = coeffs
    return x


def correlations(phi: np.ndarray, r: np.ndarray) -> np.ndarray:
    """|phi^* r|"""
    return np.abs(phi.conj().T @ r)
