"""Scorer-guided tree search over partial support estimates.

A run starts from an initial k-support estimate, then grows the tree stage by stage.
Each stage expands every surviving node l_a levels deep and prunes the leaves back to
g_a nodes, scored by the residual of the k-support extracted from their extended
support estimate. The best k-support found so far only ever improves.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import EPSILON_FLOOR
from ..core.exceptions import InvalidArgumentError
from ..schemas.problem_schema import SignalDistribution
from ..schemas.ridge_schema import SblConfig
from ..schemas.tsn_schema import Termination, TsnParams, TsnResult
from .baseline_service import omp_path
from .linalg_service import IndexSet, embed, least_squares, ranked_top_l, residual_norm, residual_project, top_l
from .ridge_service import k_support_select, sbl_ridge
from .scorer_service import IndexScorer

logger = logging.getLogger(__name__)


def error_bound(y: np.ndarray, snr_db: float) -> float:
    """max(||y|| 10^(-snr/20), 1e-5)"""
    if math.isinf(snr_db) and snr_db > 0:
        return EPSILON_FLOOR
    return max(float(np.linalg.norm(y)) * 10 ** (-snr_db / 20), EPSILON_FLOOR)


@dataclass(frozen=True)
class Node:
    support: IndexSet
    r: float


SENTINEL = Node(support=(), r=math.inf)


class NodeFamily:
    """Ordered nodes, at most one per support set"""

    def __init__(self, nodes: Iterable[Node] = ()):
        self._nodes: Dict[IndexSet, Node] = {}
        for node in nodes:
            self.add(node)

    def add(self, node: Node) -> bool:
        if node.support in self._nodes:
            return False
        self._nodes[node.support] = node
        return True

    def __contains__(self, support: IndexSet) -> bool:
        return support in self._nodes

    def __iter__(self) -> Iterator[Node]:
        return iter(self._nodes.values())

    def __len__(self) -> int:
        return len(self._nodes)

    def supports(self) -> List[IndexSet]:
        return list(self._nodes)

    def __repr__(self) -> str:
        return f"NodeFamily({list(self._nodes.values())})"


@dataclass
class PruneOutcome:
    e: bool
    family: NodeFamily
    k_support: IndexSet
    residual: float
    evaluated: int = 0
    out_of_time: bool = False


def expand(y: np.ndarray, phi: np.ndarray, gamma: IndexSet, q: int, scorer: IndexScorer) -> List[IndexSet]:
    """Children gamma + {z} for the min(n - |gamma|, q) highest-scored indices z outside gamma"""
    m, n = phi.shape
    if len(gamma) >= m:
        raise InvalidArgumentError(f"cannot expand a node with |support|={len(gamma)} >= m={m}")
    residual, _ = residual_project(phi, gamma, y)
    scores = scorer.score(phi, residual)
    u = min(n - len(gamma), q)
    children = []
    for index in ranked_top_l(scores, u, exclude=gamma):
        child = tuple(sorted(gamma + (index,)))
        if child not in children:
            children.append(child)
    return children


def extended_support(y: np.ndarray, phi: np.ndarray, pi: IndexSet, scorer: IndexScorer) -> IndexSet:
    """pi completed to m - 1 indices with the scorer's top picks on the residual"""
    m = phi.shape[0]
    if len(pi) > m - 1:
        raise InvalidArgumentError(f"|support|={len(pi)} exceeds m-1={m - 1}")
    residual, _ = residual_project(phi, pi, y)
    scores = scorer.score(phi, residual)
    return tuple(sorted(pi + top_l(scores, m - 1 - len(pi), exclude=pi)))


def k_support_from(phi: np.ndarray, psi: IndexSet, y: np.ndarray, k: int,
                   ridge_cfg: SblConfig) -> Tuple[IndexSet, float]:
    """k largest ridge coefficients on psi and the least-squares residual on them"""
    solution = sbl_ridge(phi, psi, y, ridge_cfg)
    omega = k_support_select(solution, k)
    return omega, residual_norm(phi, omega, y)


def prune(s_family: Sequence[IndexSet], i_family: NodeFamily, omega_check: IndexSet, r_check: float,
          y: np.ndarray, phi: np.ndarray, k: int, g: int, z: int, epsilon: float, scorer: IndexScorer,
          ridge_cfg: SblConfig, out_of_time: Optional[Callable[[], bool]] = None,
          merge_cap: Optional[int] = None) -> PruneOutcome:
    """Score the new leaves, keep the g best nodes and offer the best k-support to the running estimate.

    With g == 1 the z best supports are merged into one node, in residual order, skipping any
    support that would push the merge past merge_cap indices (default m - 1).
    """
    e = False
    timed_out = False
    evaluated: List[Tuple[Node, IndexSet]] = []
    for pi in s_family:
        if pi in i_family or any(node.support == pi for node, _ in evaluated):
            continue
        psi = extended_support(y, phi, pi, scorer)
        omega_bar, r = k_support_from(phi, psi, y, k, ridge_cfg)
        evaluated.append((Node(pi, r), omega_bar))
        if r <= epsilon:
            e = True
            break
        if out_of_time is not None and out_of_time():
            timed_out = True
            break

    # S nodes first, then carried-over nodes; ties keep that order
    candidates: List[Tuple[Node, Optional[IndexSet]]] = evaluated + [(node, None) for node in i_family]
    order = sorted(range(len(candidates)), key=lambda i: candidates[i][0].r)
    if not candidates:
        return PruneOutcome(e, NodeFamily(), omega_check, r_check, 0, timed_out)

    if g != 1 or e:
        survivors = [candidates[i] for i in order[:g]]
        best_node, best_omega = survivors[0]
        if best_omega is not None and max(r_check, epsilon) >= best_node.r:
            omega_check, r_check = best_omega, best_node.r
        return PruneOutcome(e, NodeFamily(node for node, _ in survivors), omega_check, r_check,
                            len(evaluated), timed_out)

    cap = phi.shape[0] - 1 if merge_cap is None else merge_cap
    union = set()
    for i in order[:z]:
        support = candidates[i][0].support
        if union and len(union.union(support)) > cap:
            continue
        union.update(support)
    merged = tuple(sorted(union))
    if len(merged) < k:
        psi = extended_support(y, phi, merged, scorer)
        omega_dot, r_dot = k_support_from(phi, psi, y, k, ridge_cfg)
    elif len(merged) == k:
        omega_dot, r_dot = merged, residual_norm(phi, merged, y)
    else:
        omega_dot, r_dot = k_support_from(phi, merged, y, k, ridge_cfg)
    if max(r_check, epsilon) >= r_dot:
        omega_check, r_check = omega_dot, r_dot
    if epsilon >= r_check:
        e = True
    return PruneOutcome(e, NodeFamily([Node(merged, r_dot)]), omega_check, r_check, len(evaluated), timed_out)


def initialize(y: np.ndarray, phi: np.ndarray, k: int, epsilon: float, scorer: IndexScorer,
               ridge_cfg: SblConfig) -> Tuple[IndexSet, bool]:
    """Initial k-support: ridge on the better of a scorer-based and an OMP-based extended support"""
    m = phi.shape[0]
    if k > m - 2:
        raise InvalidArgumentError(f"need k <= m-2, got k={k}, m={m}")
    scores = scorer.score(phi, y)
    path, _ = omp_path(phi, y, m - 1)
    r_scorer = residual_norm(phi, top_l(scores, k), y)
    r_omp = residual_norm(phi, tuple(sorted(path[:k])), y)
    if r_scorer <= r_omp:
        psi = top_l(scores, m - 1)
    else:
        psi = tuple(sorted(path))
    omega, r = k_support_from(phi, psi, y, k, ridge_cfg)
    logger.debug(f"initialize: r_scorer={r_scorer:.3e}, r_omp={r_omp:.3e}, r={r:.3e}")
    return omega, r <= epsilon


@dataclass
class TreeSearch:
    """State of one search run: clock, counters and the accepted-residual trace"""
    phi: np.ndarray
    y: np.ndarray
    k: int
    params: TsnParams
    scorer: IndexScorer
    ridge_cfg: SblConfig
    epsilon: float
    nodes_expanded: int = 0
    residual_trace: List[float] = field(default_factory=list)
    _started: float = field(default=0.0, repr=False)

    def elapsed(self) -> float:
        return time.perf_counter() - self._started

    def out_of_time(self) -> bool:
        return self.elapsed() > self.params.t_max

    def _expand_stage(self, root: IndexSet, depth: int) -> List[IndexSet]:
        level = [root]
        for _ in range(depth):
            following: List[IndexSet] = []
            seen = set()
            for gamma in level:
                children = expand(self.y, self.phi, gamma, self.params.q, self.scorer)
                self.nodes_expanded += len(children)
                for child in children:
                    if child not in seen:
                        seen.add(child)
                        following.append(child)
            level = following
        return level

    def search(self) -> Tuple[IndexSet, Termination]:
        """Run initialize and the stages; a zero budget reports budget_exhausted even on a bound hit"""
        self._started = time.perf_counter()
        omega_check, e = initialize(self.y, self.phi, self.k, self.epsilon, self.scorer, self.ridge_cfg)
        r_check = residual_norm(self.phi, omega_check, self.y)
        self.residual_trace.append(r_check)
        if self.params.t_max == 0:
            return omega_check, Termination.BUDGET_EXHAUSTED
        if e:
            return omega_check, Termination.EPSILON_HIT

        m = self.phi.shape[0]
        previous = NodeFamily([SENTINEL])
        for stage, (depth, width) in enumerate(zip(self.params.stage_depths, self.params.stage_widths), start=1):
            # merged nodes must stay expandable through the remaining stages
            merge_cap = m - 1 - sum(self.params.stage_depths[stage:])
            current = NodeFamily()
            for parent in previous:
                if self.out_of_time():
                    logger.debug(f"Time budget {self.params.t_max}s exhausted before stage {stage}")
                    return omega_check, Termination.BUDGET_EXHAUSTED
                leaves = self._expand_stage(parent.support, depth)
                outcome = prune(leaves, current, omega_check, r_check, self.y, self.phi, self.k, width,
                                self.params.z, self.epsilon, self.scorer, self.ridge_cfg, self.out_of_time,
                                merge_cap=merge_cap)
                if outcome.residual < r_check:
                    self.residual_trace.append(outcome.residual)
                current, omega_check, r_check = outcome.family, outcome.k_support, outcome.residual
                if outcome.e:
                    return omega_check, Termination.EPSILON_HIT
                if outcome.out_of_time or self.out_of_time():
                    return omega_check, Termination.BUDGET_EXHAUSTED
            if not len(current):
                break
            previous = current
        return omega_check, Termination.TREE_EXHAUSTED


def tsn(y: np.ndarray, phi: np.ndarray, k: int, params: TsnParams, scorer: IndexScorer,
        ridge_cfg: Optional[SblConfig] = None, distribution: Optional[SignalDistribution] = None,
        snr_db: float = math.inf,
        known_sparsity: bool = False) -> TsnResult:
    """Recover a k-sparse signal from y = phi x0 + w by scorer-guided tree search.

    Final support keeps the ridge coefficients on the k-support whose modulus exceeds the
    distribution's rho; known_sparsity returns the k-support itself.
    """
    m, n = phi.shape
    if k < 1 or k > m - 2:
        raise InvalidArgumentError(f"need 1 <= k <= m-2, got k={k}, m={m}")
    if params.total_depth > k:
        raise InvalidArgumentError(f"sum of stage depths {params.total_depth} exceeds k={k}")
    if ridge_cfg is None:
        ridge_cfg = SblConfig.from_snr(y, snr_db)
    epsilon = params.epsilon if params.epsilon is not None else error_bound(y, snr_db)

    search = TreeSearch(phi=phi, y=y, k=k, params=params, scorer=scorer, ridge_cfg=ridge_cfg, epsilon=epsilon)
    omega_check, terminated = search.search()

    if known_sparsity:
        support = omega_check
    else:
        rho = (distribution or SignalDistribution()).rho
        solution = sbl_ridge(phi, omega_check, y, ridge_cfg)
        support = tuple(i for i, c in zip(solution.support, solution.coeffs) if abs(c) > rho)
    coeffs, final_residual = least_squares(phi, support, y)
    elapsed = search.elapsed()
    logger.debug(
        f"tsn finished: {terminated.value}, |support|={len(support)}, residual={final_residual:.3e}, "
        f"nodes={search.nodes_expanded}, {elapsed:.3f}s"
    )
    return TsnResult(
        support_estimate=support,
        signal_estimate=embed(coeffs, support, n),
        k_support=omega_check,
        residual=search.residual_trace[-1],
        terminated=terminated,
        elapsed_seconds=elapsed,
        nodes_expanded=search.nodes_expanded,
        residual_trace=search.residual_trace,
    )
