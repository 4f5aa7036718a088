import math

import numpy as np
import pytest

from sparse_recovery.app.core.exceptions import InvalidArgumentError, NumericFailureError
from sparse_recovery.app.schemas.problem_schema import MatrixEnsemble, ScalarField, SignalDistribution
from sparse_recovery.app.schemas.scorer_schema import (
    Activation, LearningRateStage, TrainConfig, default_schedule,
)
from sparse_recovery.app.services.ensemble_service import gen_matrix
from sparse_recovery.app.services.scorer_service import (
    CorrelationScorer, MlpScorer, OracleScorer, RandomScorer, ScorerTrainer, eval_scorer, eval_scorer_sweep,
    residual_features, support_targets, train_scorer,
)


@pytest.fixture
def phi(rng):
    return gen_matrix(MatrixEnsemble(m=10, n=20), rng)


class TestReferenceScorers:
    def test_correlation_scorer_is_a_simplex_vector(self, phi, rng):
        v = CorrelationScorer().score(phi, rng.standard_normal(10))
        assert v.shape == (20,)
        assert np.all(v >= 0) and v.sum() == pytest.approx(1.0)

    def test_zero_residual_gives_uniform_scores(self, phi):
        np.testing.assert_allclose(CorrelationScorer().score(phi, np.zeros(10)), 1 / 20)

    def test_oracle_scorer(self, phi):
        v = OracleScorer((2, 7), 20).score(phi, np.zeros(10))
        assert v[2] == v[7] == 0.5
        assert v.sum() == pytest.approx(1.0)

    def test_random_scorer(self, phi, rng):
        v = RandomScorer(rng).score(phi, np.ones(10))
        assert np.all(v >= 0) and v.sum() == pytest.approx(1.0)

    def test_residual_shape_is_checked(self, phi):
        with pytest.raises(InvalidArgumentError):
            CorrelationScorer().score(phi, np.ones(9))


class TestFeatures:
    def test_residual_features(self):
        features = residual_features(np.array([[3.0 + 4.0j, 0.0], [0.0, 0.0]]))
        assert features.shape == (2, 4)
        np.testing.assert_allclose(features[0], [0.6, 0.0, 0.8, 0.0])
        np.testing.assert_array_equal(features[1], 0.0)

    def test_support_targets(self):
        targets = support_targets([(0, 2), (1,)], 4)
        np.testing.assert_allclose(targets, [[0.5, 0, 0.5, 0], [0, 1, 0, 0]])


class TestMlpScorer:
    def test_layer_dims(self, rng):
        real = MlpScorer.initialize(ScalarField.REAL, 10, 20, rng)
        assert real.layer_dims == [10, 40, 40, 20]
        complex_model = MlpScorer.initialize(ScalarField.COMPLEX, 10, 20, rng, hidden_widths=[16],
                                              activations=[Activation.TANH])
        assert complex_model.layer_dims == [20, 16, 20]

    def test_score_is_a_simplex_vector(self, phi, rng):
        v = MlpScorer.initialize(ScalarField.REAL, 10, 20, rng).score(phi, rng.standard_normal(10))
        assert v.shape == (20,)
        assert np.all(v > 0) and v.sum() == pytest.approx(1.0)

    def test_gradients_match_finite_differences(self, rng):
        """Backpropagated gradients agree with central differences of the loss."""
        model = MlpScorer.initialize(ScalarField.REAL, 3, 5, rng, hidden_widths=[4, 4],
                                     activations=[Activation.TANH, Activation.TANH])
        for b in model.biases:
            b[:] = rng.standard_normal(b.shape) * 0.1
        features = residual_features(rng.standard_normal((6, 3)))
        targets = support_targets([(0,), (1, 2), (4,), (0, 3), (2,), (1, 4)], 5)
        _, grad_w, grad_b = model.loss_and_gradients(features, targets)

        h = 1e-6
        for params, grads in ((model.weights, grad_w), (model.biases, grad_b)):
            for param, grad in zip(params, grads):
                for index in np.ndindex(param.shape):
                    original = param[index]
                    param[index] = original + h
                    plus, _, _ = model.loss_and_gradients(features, targets)
                    param[index] = original - h
                    minus, _, _ = model.loss_and_gradients(features, targets)
                    param[index] = original
                    assert grad[index] == pytest.approx((plus - minus) / (2 * h), rel=1e-4, abs=1e-9)

    def test_shape_mismatch(self, rng):
        with pytest.raises(InvalidArgumentError):
            MlpScorer(ScalarField.REAL, 3, 5, [np.zeros((4, 2)), np.zeros((5, 4))],
                      [np.zeros(4), np.zeros(5)], [Activation.RELU])


class TestTraining:
    def test_schedule_covers_every_epoch(self):
        stages = default_schedule(40)
        assert stages[0].rate == 1e-3 and stages[0].end_epoch == 25
        assert stages[-1].end_epoch == 40 and stages[-1].rate == pytest.approx(1e-3 / 64)
        config = TrainConfig(n_e=40)
        assert config.rate_for_epoch(25) == 1e-3
        assert config.rate_for_epoch(26) == pytest.approx(1e-3 / 4)

    def test_training_lowers_the_loss(self, phi, rng):
        config = TrainConfig(k1=1, k2=2, s_d=400, s_b=40, n_e=6, hidden_widths=[32, 32],
                             learning_rate_schedule=[LearningRateStage(start_epoch=1, end_epoch=6, rate=1e-2)])
        model = train_scorer(phi, config, SignalDistribution(), rng)
        assert len(model.training_loss_trace) == 6
        assert all(math.isfinite(loss) for loss in model.training_loss_trace)
        assert model.training_loss_trace[-1] < model.training_loss_trace[0]
        assert model.train_config == config

    def test_non_finite_loss_reports_epoch_and_batch(self, phi, rng):
        trainer = ScorerTrainer(phi, TrainConfig(k1=1, k2=2, s_d=20, s_b=10, n_e=1), SignalDistribution(), rng)
        trainer.scorer.weights[0][:] = np.nan
        with pytest.raises(NumericFailureError) as excinfo:
            trainer.run_epoch(1)
        assert excinfo.value.epoch == 1 and excinfo.value.batch == 1


class TestEvaluation:
    def test_oracle_contains_every_support(self, phi, rng):
        def oracle(instance):
            return OracleScorer(instance.support, instance.n)
        result = eval_scorer(oracle, phi, SignalDistribution(), 3, 3, 20, math.inf, rng)
        assert result.mean_overlap == 1.0 and result.containment_rate == 1.0

    def test_correlation_finds_a_single_atom(self, phi, rng):
        result = eval_scorer(CorrelationScorer(), phi, SignalDistribution(), 1, 1, 20, math.inf, rng)
        assert result.containment_rate == 1.0

    def test_sweep_defaults_v_to_s(self, phi, rng):
        table = eval_scorer_sweep(CorrelationScorer(), phi, SignalDistribution(), [1, 2, 3], None, 5, 10.0, rng)
        assert list(table["sparsity"]) == [1, 2, 3]
        assert list(table["v"]) == [1, 2, 3]
        assert table["mean_overlap"].between(0, 1).all()

    def test_invalid_v(self, phi, rng):
        with pytest.raises(InvalidArgumentError):
            eval_scorer(CorrelationScorer(), phi, SignalDistribution(), 2, 21, 1, math.inf, rng)
