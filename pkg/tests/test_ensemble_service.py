import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from sparse_recovery.app.core.exceptions import InvalidArgumentError
from sparse_recovery.app.schemas.problem_schema import MatrixEnsemble, MatrixKind, SignalDistribution, SignalKind
from sparse_recovery.app.services.ensemble_service import (
    correlated_factors, correlated_from_factors, derive_seed, export_instance, export_matrix_csv, fixed_matrix,
    gen_matrix, gen_signal, gen_training_set, import_instance, import_matrix_csv, instance_checksum,
    make_instance, make_rng, measure,
)
from sparse_recovery.app.services.linalg_service import residual_norm


class TestSeeds:
    def test_derive_seed_is_stable(self):
        assert derive_seed(1, 20.0, 3, 0) == derive_seed(1, 20.0, 3, 0)
        assert derive_seed(1, 20.0, 3, 0) != derive_seed(1, 20.0, 3, 1)
        assert derive_seed(1, "matrix") != derive_seed(2, "matrix")
        assert 0 <= derive_seed(99, math.inf) < 2 ** 64


class TestMatrices:
    @pytest.mark.parametrize("kind", list(MatrixKind))
    def test_unit_norm_columns(self, kind):
        phi = gen_matrix(MatrixEnsemble(kind=kind, m=12, n=30), make_rng(3))
        assert phi.shape == (12, 30)
        np.testing.assert_allclose(np.linalg.norm(phi, axis=0), 1.0, atol=1e-12)
        assert np.iscomplexobj(phi) == (kind is not MatrixKind.GAUSSIAN_REAL)

    def test_same_seed_same_matrix(self, real_ensemble):
        np.testing.assert_array_equal(gen_matrix(real_ensemble, make_rng(4)), gen_matrix(real_ensemble, make_rng(4)))
        np.testing.assert_array_equal(fixed_matrix(real_ensemble, 4), fixed_matrix(real_ensemble, 4))

    def test_partial_dft_rows_are_dft_rows(self):
        phi = gen_matrix(MatrixEnsemble(kind=MatrixKind.PARTIAL_DFT, m=4, n=16), make_rng(0))
        # every row is a scaled DFT row: constant modulus entries
        np.testing.assert_allclose(np.abs(phi), 0.5, atol=1e-12)

    def test_partial_dft_needs_wide_matrix(self):
        with pytest.raises(ValidationError):
            MatrixEnsemble(kind=MatrixKind.PARTIAL_DFT, m=20, n=10)

    def test_correlated_columns(self):
        factors = correlated_factors(10, 30, make_rng(8))
        phi = correlated_from_factors(factors)
        gram = np.abs(phi.conj().T @ phi)
        off_diagonal = gram[~np.eye(30, dtype=bool)]
        gaussian = gen_matrix(MatrixEnsemble(kind=MatrixKind.GAUSSIAN_COMPLEX, m=10, n=30), make_rng(8))
        gaussian_gram = np.abs(gaussian.conj().T @ gaussian)[~np.eye(30, dtype=bool)]
        assert off_diagonal.mean() > gaussian_gram.mean()


class TestSignals:
    def test_support_and_magnitudes(self, rng):
        x0, support = gen_signal(SignalDistribution(), 50, 6, rng)
        assert len(support) == 6 and list(support) == sorted(support)
        assert np.count_nonzero(x0) == 6
        assert np.all((np.abs(x0[list(support)]) >= 0.1) & (np.abs(x0[list(support)]) <= 1.0))

    def test_nonnegative(self, rng):
        x0, support = gen_signal(SignalDistribution(kind=SignalKind.NONNEGATIVE_INTERVAL), 50, 10, rng)
        assert np.all(x0[list(support)] > 0)

    def test_complex_parts_avoid_small_interval(self, rng):
        x0, support = gen_signal(SignalDistribution(kind=SignalKind.COMPLEX_SYMMETRIC), 50, 10, rng)
        values = x0[list(support)]
        assert np.all(np.abs(values.real) >= 0.1) and np.all(np.abs(values.imag) >= 0.1)
        assert SignalDistribution(kind=SignalKind.COMPLEX_SYMMETRIC).rho == pytest.approx(0.1 * math.sqrt(2) / 2)

    def test_zero_and_invalid_sparsity(self, rng):
        x0, support = gen_signal(SignalDistribution(), 10, 0, rng)
        assert support == () and not np.any(x0)
        with pytest.raises(InvalidArgumentError):
            gen_signal(SignalDistribution(), 10, 11, rng)


class TestMeasurements:
    def test_noiseless(self, rng):
        phi = rng.standard_normal((8, 16))
        x0, _ = gen_signal(SignalDistribution(), 16, 3, rng)
        y, w = measure(phi, x0, math.inf, rng)
        assert np.linalg.norm(w) == 0.0
        np.testing.assert_array_equal(y, phi @ x0)

    @pytest.mark.parametrize("snr_db, expected", [(0.0, 1.0), (20.0, 0.01)])
    def test_noise_power_matches_snr(self, rng, snr_db, expected):
        phi = gen_matrix(MatrixEnsemble(m=20, n=40), rng)
        x0, _ = gen_signal(SignalDistribution(), 40, 4, rng)
        signal_power = np.linalg.norm(phi @ x0) ** 2
        ratios = [np.linalg.norm(measure(phi, x0, snr_db, rng)[1]) ** 2 / signal_power for _ in range(10000)]
        assert np.mean(ratios) == pytest.approx(expected, rel=0.05)

    def test_complex_signal_needs_complex_ensemble(self, real_ensemble):
        with pytest.raises(InvalidArgumentError):
            make_instance(real_ensemble, SignalDistribution(kind=SignalKind.COMPLEX_SYMMETRIC), 2, math.inf, seed=1)

    def test_instances_are_reproducible(self, real_ensemble):
        first = make_instance(real_ensemble, SignalDistribution(), 3, 10.0, seed=5)
        again = make_instance(real_ensemble, SignalDistribution(), 3, 10.0, seed=5)
        other = make_instance(real_ensemble, SignalDistribution(), 3, 10.0, seed=6)
        assert instance_checksum(first) == instance_checksum(again)
        assert instance_checksum(first) != instance_checksum(other)

    def test_fixed_matrix_is_reused(self, real_ensemble):
        phi = fixed_matrix(real_ensemble, 0)
        instance = make_instance(real_ensemble, SignalDistribution(), 2, math.inf, seed=3, phi=phi)
        np.testing.assert_array_equal(instance.phi, phi)


class TestTrainingSet:
    def test_noiseless_samples_lie_in_support_span(self, rng):
        phi = gen_matrix(MatrixEnsemble(m=10, n=20), rng)
        samples = gen_training_set(phi, 1, 3, math.inf, SignalDistribution(), 50, rng)
        assert len(samples) == 50
        assert all(1 <= len(sample.support) <= 3 for sample in samples)
        assert all(residual_norm(phi, sample.support, sample.y) < 1e-10 for sample in samples)

    def test_noise_stays_inside_the_ball(self, rng):
        phi = gen_matrix(MatrixEnsemble(m=10, n=20), rng)
        dist = SignalDistribution()
        for sample in gen_training_set(phi, 2, 2, 5.0, dist, 50, rng):
            # residual after projection never exceeds the injected perturbation
            clean_norm_bound = np.linalg.norm(sample.y) / (1 - 10 ** (-5.0 / 20))
            assert residual_norm(phi, sample.support, sample.y) <= 10 ** (-5.0 / 20) * clean_norm_bound

    def test_invalid_range(self, rng):
        with pytest.raises(InvalidArgumentError):
            gen_training_set(np.eye(4), 3, 2, math.inf, SignalDistribution(), 1, rng)


class TestCsvExport:
    def test_complex_matrix_csv(self, tmp_path, rng):
        phi = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        export_matrix_csv(phi, tmp_path / "phi.csv")
        first_line = (tmp_path / "phi.csv").read_text(encoding="utf-8").splitlines()[0]
        assert first_line.count("i") == 4
        np.testing.assert_array_equal(import_matrix_csv(tmp_path / "phi.csv"), phi)

    def test_instance_with_sidecar(self, tmp_path, noisy_instance, real_ensemble):
        sidecar = export_instance(noisy_instance, real_ensemble, SignalDistribution(), tmp_path, stem="case")
        metadata = json.loads(sidecar.read_text(encoding="utf-8"))
        assert metadata["s"] == 3 and metadata["ensemble"] == "gaussian_real"
        restored, parsed = import_instance(sidecar)
        assert parsed.seed == noisy_instance.seed
        assert restored.support == noisy_instance.support
        assert instance_checksum(restored) == instance_checksum(noisy_instance)
