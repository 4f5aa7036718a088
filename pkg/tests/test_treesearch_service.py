import math

import numpy as np
import pytest

from sparse_recovery.app.core.exceptions import InvalidArgumentError
from sparse_recovery.app.schemas.problem_schema import MatrixEnsemble, SignalDistribution
from sparse_recovery.app.schemas.ridge_schema import SblConfig
from sparse_recovery.app.schemas.tsn_schema import Termination, TsnParams
from sparse_recovery.app.services.ensemble_service import make_instance
from sparse_recovery.app.services.linalg_service import least_squares, residual_norm, residual_project, top_l
from sparse_recovery.app.services.ridge_service import k_support_select, sbl_ridge
from sparse_recovery.app.services.scorer_service import CorrelationScorer, OracleScorer
from sparse_recovery.app.services.treesearch_service import (
    SENTINEL, Node, NodeFamily, error_bound, expand, extended_support, initialize, k_support_from, prune, tsn,
)


@pytest.fixture
def ridge_cfg(noisy_instance):
    return SblConfig.from_snr(noisy_instance.y, 20.0)


def reference_prune(leaves, carried, omega_check, r_check, y, phi, k, g, z, epsilon, scorer, ridge_cfg):
    """Prune written out step by step from its definition; carried is a list of (support, r)."""
    m = phi.shape[0]

    def k_support_on(psi):
        omega = k_support_select(sbl_ridge(phi, psi, y, ridge_cfg), k)
        return omega, least_squares(phi, omega, y)[1]

    def completed(pi):
        residual, _ = residual_project(phi, pi, y)
        return tuple(sorted(pi + top_l(scorer.score(phi, residual), m - 1 - len(pi), exclude=pi)))

    e = False
    scored = []
    carried_supports = [support for support, _ in carried]
    for pi in leaves:
        if pi in carried_supports or pi in [item[0] for item in scored]:
            continue
        omega, r = k_support_on(completed(pi))
        scored.append((pi, r, omega))
        if r <= epsilon:
            e = True
            break
    pool = sorted(scored + [(support, r, None) for support, r in carried], key=lambda item: item[1])

    if g != 1 or e:
        kept = pool[:g]
        if kept[0][2] is not None and max(r_check, epsilon) >= kept[0][1]:
            omega_check, r_check = kept[0][2], kept[0][1]
        return e, [item[0] for item in kept], omega_check, r_check

    union = set()
    for support, _, _ in pool[:z]:
        if not union or len(union | set(support)) <= m - 1:
            union |= set(support)
    j = tuple(sorted(union))
    if len(j) < k:
        omega_dot, r_dot = k_support_on(completed(j))
    elif len(j) == k:
        omega_dot, r_dot = j, least_squares(phi, j, y)[1]
    else:
        omega_dot, r_dot = k_support_on(j)
    if max(r_check, epsilon) >= r_dot:
        omega_check, r_check = omega_dot, r_dot
    if epsilon >= r_check:
        e = True
    return e, [j], omega_check, r_check


class TestHelpers:
    def test_error_bound(self):
        assert error_bound(np.ones(4), math.inf) == 1e-5
        assert error_bound(np.array([1.0, 0.0]), 20.0) == pytest.approx(0.1)
        assert error_bound(np.full(3, 1e-9), 20.0) == 1e-5

    def test_node_family_keeps_one_node_per_support(self):
        family = NodeFamily([Node((1, 2), 0.5), Node((1, 2), 0.1), SENTINEL])
        assert len(family) == 2
        assert (1, 2) in family and () in family
        assert [node.r for node in family] == [0.5, math.inf]


class TestExpand:
    def test_children_extend_the_parent(self, noisy_instance):
        instance = noisy_instance
        children = expand(instance.y, instance.phi, (4,), 5, CorrelationScorer())
        assert len(children) == 5
        assert len(set(children)) == 5
        assert all(4 in child and len(child) == 2 for child in children)

    def test_width_is_capped_by_remaining_columns(self, rng):
        phi = rng.standard_normal((6, 4))
        children = expand(rng.standard_normal(6), phi, (0, 1), 10, CorrelationScorer())
        assert sorted(children) == [(0, 1, 2), (0, 1, 3)]

    def test_full_support_cannot_expand(self, noisy_instance):
        instance = noisy_instance
        with pytest.raises(InvalidArgumentError):
            expand(instance.y, instance.phi, tuple(range(20)), 2, CorrelationScorer())

    def test_extended_support_has_m_minus_one_indices(self, noisy_instance):
        instance = noisy_instance
        psi = extended_support(instance.y, instance.phi, (2, 9), CorrelationScorer())
        assert len(psi) == instance.m - 1
        assert {2, 9} <= set(psi)


class TestInitialize:
    def test_oracle_scorer_hits_the_bound(self, noiseless_instance):
        instance = noiseless_instance
        scorer = OracleScorer(instance.support, instance.n)
        omega, e = initialize(instance.y, instance.phi, 3, 1e-5, scorer, SblConfig(noiseless=True))
        assert e
        assert set(instance.support) <= set(omega)

    def test_k_must_leave_two_rows(self, noiseless_instance):
        instance = noiseless_instance
        with pytest.raises(InvalidArgumentError):
            initialize(instance.y, instance.phi, 19, 1e-5, CorrelationScorer(), SblConfig(noiseless=True))


class TestPrune:
    def test_keeps_the_g_best_nodes(self, noisy_instance, ridge_cfg):
        """The widest branch agrees with a direct score-sort-truncate of the same leaves."""
        instance, scorer = noisy_instance, CorrelationScorer()
        leaves = expand(instance.y, instance.phi, (), 6, scorer)
        expected = []
        for pi in leaves:
            psi = extended_support(instance.y, instance.phi, pi, scorer)
            omega, r = k_support_from(instance.phi, psi, instance.y, 3, ridge_cfg)
            expected.append((r, pi, omega))
        expected.sort(key=lambda item: item[0])

        outcome = prune(leaves, NodeFamily(), (), math.inf, instance.y, instance.phi, 3, 2, 1, 0.0,
                        scorer, ridge_cfg)
        assert not outcome.e
        assert outcome.evaluated == 6
        assert outcome.family.supports() == [expected[0][1], expected[1][1]]
        assert outcome.k_support == expected[0][2]
        assert outcome.residual == pytest.approx(expected[0][0])

    def test_known_supports_are_not_rescored(self, noisy_instance, ridge_cfg):
        instance = noisy_instance
        carried = NodeFamily([Node((0,), 0.01)])
        outcome = prune([(0,), (1,)], carried, (), math.inf, instance.y, instance.phi, 3, 2, 1, 0.0,
                        CorrelationScorer(), ridge_cfg)
        assert outcome.evaluated == 1
        # the carried node wins but brings no k-support with it
        assert outcome.family.supports()[0] == (0,)
        assert outcome.k_support == ()
        assert outcome.residual == math.inf

    def test_single_width_merges_the_z_best(self, noisy_instance, ridge_cfg):
        instance = noisy_instance
        leaves = expand(instance.y, instance.phi, (), 4, CorrelationScorer())
        outcome = prune(leaves, NodeFamily(), (), math.inf, instance.y, instance.phi, 3, 1, 2, 0.0,
                        CorrelationScorer(), ridge_cfg)
        (merged,) = outcome.family.supports()
        assert len(merged) == 2
        assert set(merged) <= {i for leaf in leaves for i in leaf}
        assert outcome.residual <= residual_norm(instance.phi, outcome.k_support, instance.y) + 1e-12

    def test_merge_is_capped(self, noisy_instance, ridge_cfg):
        instance = noisy_instance
        leaves = expand(instance.y, instance.phi, (), 30, CorrelationScorer())
        outcome = prune(leaves, NodeFamily(), (), math.inf, instance.y, instance.phi, 3, 1, 30, 0.0,
                        CorrelationScorer(), ridge_cfg, merge_cap=6)
        (merged,) = outcome.family.supports()
        assert len(merged) == 6
        default = prune(leaves, NodeFamily(), (), math.inf, instance.y, instance.phi, 3, 1, 30, 0.0,
                        CorrelationScorer(), ridge_cfg)
        assert len(default.family.supports()[0]) == instance.m - 1

    def test_matches_reference_on_random_instances(self, rng):
        m, n, scorer = 8, 16, CorrelationScorer()
        for _ in range(100):
            phi = rng.standard_normal((m, n))
            phi /= np.linalg.norm(phi, axis=0)
            x0 = np.zeros(n)
            x0[rng.choice(n, size=2, replace=False)] = rng.uniform(0.1, 1.0, size=2)
            y = phi @ x0 + 0.05 * rng.standard_normal(m)
            ridge = SblConfig.from_snr(y, 20.0, max_iter=20)

            parent = tuple(sorted(rng.choice(n, size=int(rng.integers(0, 3)), replace=False).tolist()))
            leaves = expand(y, phi, parent, int(rng.integers(2, 6)), scorer)
            if rng.random() < 0.5:
                leaves = [child for leaf in leaves for child in expand(y, phi, leaf, 2, scorer)]
            carried = [(leaves[0], float(rng.uniform(0.0, 2.0)))]
            if rng.random() < 0.5:
                carried.append((tuple(sorted(rng.choice(n, size=len(leaves[-1]), replace=False).tolist())),
                                float(rng.uniform(0.0, 2.0))))
            k, g, z = 3, int(rng.integers(1, 4)), int(rng.integers(1, 5))
            epsilon = 0.0 if rng.random() < 0.8 else float(rng.uniform(0.05, 0.5))
            omega_check, r_check = ((), math.inf) if rng.random() < 0.5 else ((0, 1, 2), float(rng.uniform(0.0, 1.0)))

            expected = reference_prune(leaves, carried, omega_check, r_check, y, phi, k, g, z, epsilon,
                                       scorer, ridge)
            family = NodeFamily(Node(support, r) for support, r in carried)
            outcome = prune(leaves, family, omega_check, r_check, y, phi, k, g, z, epsilon, scorer, ridge)
            assert outcome.e == expected[0]
            assert outcome.family.supports() == expected[1]
            assert outcome.k_support == expected[2]
            assert outcome.residual == expected[3]

    def test_bound_hit_stops_early(self, noiseless_instance):
        instance = noiseless_instance
        scorer = OracleScorer(instance.support, instance.n)
        leaves = [(instance.support[0],), (instance.support[1],), (instance.support[2],)]
        outcome = prune(leaves, NodeFamily(), (), math.inf, instance.y, instance.phi, 3, 2, 1, 1e-5,
                        scorer, SblConfig(noiseless=True))
        assert outcome.e
        assert outcome.evaluated == 1
        assert residual_norm(instance.phi, outcome.k_support, instance.y) <= 1e-5


class TestTsn:
    def test_noiseless_recovery(self, real_ensemble):
        recovered = 0
        for seed in range(5):
            instance = make_instance(real_ensemble, SignalDistribution(), 2, math.inf, seed=seed)
            result = tsn(instance.y, instance.phi, 4, TsnParams.preset("tau1", instance.m), CorrelationScorer())
            if result.support_estimate == instance.support:
                recovered += 1
                np.testing.assert_allclose(result.signal_estimate, instance.x0, atol=1e-8)
        assert recovered >= 4

    def test_residual_trace_never_increases(self, noisy_instance):
        instance = noisy_instance
        params = TsnParams(q=4, z=1, epsilon=0.0, stage_depths=[2, 1], stage_widths=[5, 1])
        result = tsn(instance.y, instance.phi, 3, params, CorrelationScorer(), snr_db=20.0)
        assert result.terminated is Termination.TREE_EXHAUSTED
        assert np.all(np.diff(result.residual_trace) <= 0)
        assert result.residual == result.residual_trace[-1]

    def test_expanded_nodes_are_bounded(self, noisy_instance):
        instance = noisy_instance
        params = TsnParams(q=3, z=1, epsilon=0.0, stage_depths=[2, 1], stage_widths=[4, 1])
        result = tsn(instance.y, instance.phi, 3, params, CorrelationScorer(), snr_db=20.0)
        # stage one: 3 + 9 children from the root; stage two: at most 4 parents x 3
        assert 0 < result.nodes_expanded <= 24

    def test_zero_budget(self, noisy_instance):
        instance = noisy_instance
        params = TsnParams(q=4, z=1, epsilon=0.0, stage_depths=[2, 1], stage_widths=[5, 1], t_max=0.0)
        result = tsn(instance.y, instance.phi, 3, params, CorrelationScorer(), snr_db=20.0)
        assert result.terminated is Termination.BUDGET_EXHAUSTED
        assert result.nodes_expanded == 0
        assert len(result.k_support) == 3

    def test_zero_budget_wins_over_a_bound_hit(self, noiseless_instance):
        instance = noiseless_instance
        params = TsnParams(q=4, stage_depths=[2, 1], stage_widths=[5, 1], t_max=0.0)
        result = tsn(instance.y, instance.phi, 3, params, OracleScorer(instance.support, instance.n))
        assert result.terminated is Termination.BUDGET_EXHAUSTED
        assert result.nodes_expanded == 0
        assert result.support_estimate == instance.support

    @pytest.mark.parametrize("s, seed", [(6, 0), (8, 1), (8, 2)])
    def test_wide_preset_runs_to_completion(self, s, seed):
        ensemble = MatrixEnsemble(m=20, n=100)
        instance = make_instance(ensemble, SignalDistribution(), s, 30.0, seed=seed)
        params = TsnParams.preset("wide", 20, 100, epsilon=0.0)
        result = tsn(instance.y, instance.phi, s, params, CorrelationScorer(), snr_db=30.0)
        assert result.terminated is Termination.TREE_EXHAUSTED
        assert len(result.k_support) == s
        assert np.all(np.diff(result.residual_trace) <= 0)

    def test_single_stage_tree(self, noisy_instance):
        instance = noisy_instance
        params = TsnParams(q=2, z=1, epsilon=0.0, stage_depths=[1], stage_widths=[1])
        result = tsn(instance.y, instance.phi, 3, params, CorrelationScorer(), snr_db=20.0)
        assert result.terminated is Termination.TREE_EXHAUSTED
        assert result.nodes_expanded == 2

    def test_known_sparsity_returns_the_k_support(self, noisy_instance):
        instance = noisy_instance
        params = TsnParams(q=5, stage_depths=[2, 1], stage_widths=[10, 1])
        result = tsn(instance.y, instance.phi, 3, params, CorrelationScorer(), snr_db=20.0, known_sparsity=True)
        assert result.support_estimate == result.k_support
        assert np.count_nonzero(result.signal_estimate) <= 3

    def test_threshold_follows_the_distribution(self, noiseless_instance):
        instance = noiseless_instance
        params = TsnParams.preset("tau1", instance.m)
        default = tsn(instance.y, instance.phi, 4, params, CorrelationScorer())
        assert default.support_estimate
        # rho = 1.5 sits above every entry of a [0.1, 1] signal
        strict = tsn(instance.y, instance.phi, 4, params, CorrelationScorer(),
                     distribution=SignalDistribution(min_mag=3.0, max_mag=4.0))
        assert strict.k_support == default.k_support
        assert strict.support_estimate == ()
        assert not np.any(strict.signal_estimate)

    def test_complex_instance(self, complex_instance):
        instance = complex_instance
        result = tsn(instance.y, instance.phi, 4, TsnParams.preset("tau1", instance.m), CorrelationScorer(),
                     distribution=SignalDistribution(kind="complex_symmetric"))
        assert result.terminated is Termination.EPSILON_HIT
        assert result.support_estimate == instance.support
        np.testing.assert_allclose(result.signal_estimate, instance.x0, atol=1e-8)

    @pytest.mark.parametrize("k, depths", [(19, [1]), (2, [2, 1])])
    def test_invalid_parameters(self, noisy_instance, k, depths):
        instance = noisy_instance
        params = TsnParams(q=2, stage_depths=depths, stage_widths=[1] * len(depths))
        with pytest.raises(InvalidArgumentError):
            tsn(instance.y, instance.phi, k, params, CorrelationScorer())
