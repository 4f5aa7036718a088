import json
import math

import numpy as np
import pytest

from sparse_recovery.app.schemas.problem_schema import MatrixEnsemble, MatrixKind, SignalDistribution, SignalKind
from sparse_recovery.app.services.ensemble_service import make_instance


@pytest.fixture
def rng():
    """Seeded generator for tests that draw their own data."""
    return np.random.default_rng(20240611)


@pytest.fixture
def real_ensemble():
    return MatrixEnsemble(kind=MatrixKind.GAUSSIAN_REAL, m=20, n=60)


@pytest.fixture
def complex_ensemble():
    return MatrixEnsemble(kind=MatrixKind.GAUSSIAN_COMPLEX, m=16, n=40)


@pytest.fixture
def noiseless_instance(real_ensemble):
    """Real Gaussian 20x60 instance with three nonzeros and no noise."""
    return make_instance(real_ensemble, SignalDistribution(), 3, math.inf, seed=7)


@pytest.fixture
def noisy_instance(real_ensemble):
    return make_instance(real_ensemble, SignalDistribution(), 3, 20.0, seed=11)


@pytest.fixture
def complex_instance(complex_ensemble):
    return make_instance(complex_ensemble, SignalDistribution(kind=SignalKind.COMPLEX_SYMMETRIC), 2, math.inf, seed=5)


@pytest.fixture
def experiment_document():
    """Small experiment pairing OMP with a correlation-scored tree search."""
    return {
        "ensemble": {"kind": "gaussian_real", "m": 12, "n": 24},
        "sparsity_range": [1, 2],
        "snr_db": "inf",
        "trials": 3,
        "master_seed": 42,
        "algorithms": [
            {"name": "omp", "baseline": {"kind": "omp"}},
            {"name": "tsn", "tsn": {"preset": "tau1", "scorer": "correlation"}},
        ],
    }


@pytest.fixture
def write_json(tmp_path):
    """Write a mapping to a JSON file under tmp_path and return the path."""
    def _write(payload, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path
    return _write
