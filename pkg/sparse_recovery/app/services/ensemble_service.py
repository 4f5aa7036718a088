import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..core.exceptions import InvalidArgumentError
from ..schemas.problem_schema import (
    InstanceMetadata, MatrixEnsemble, MatrixKind, ProblemInstance, ScalarField, SignalDistribution,
)
from .linalg_service import IndexSet

logger = logging.getLogger(__name__)


@dataclass
class TrainingSample:
    y: np.ndarray
    support: IndexSet


@dataclass
class CorrelatedFactors:
    """Gaussian factors behind a correlated-column matrix, kept for reproduction"""
    p1: np.ndarray
    q1: np.ndarray
    p2: np.ndarray
    q2: np.ndarray


def derive_seed(master_seed: int, *keys) -> int:
    """64-bit seed from a master seed and a key tuple; stable across processes and platforms"""
    payload = json.dumps([int(master_seed), *[str(k) for k in keys]]).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


def normalize_columns(phi: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(phi, axis=0)
    if np.any(norms == 0):
        raise InvalidArgumentError("matrix has an all-zero column, cannot normalize")
    return phi / norms


def correlated_factors(m: int, n: int, rng: np.random.Generator) -> CorrelatedFactors:
    p1 = rng.standard_normal((m, n))
    q1 = rng.standard_normal((n, n))
    p2 = rng.standard_normal((m, n))
    q2 = rng.standard_normal((n, n))
    return CorrelatedFactors(p1=p1, q1=q1, p2=p2, q2=q2)


def correlated_from_factors(factors: CorrelatedFactors) -> np.ndarray:
    """sum_z z^-2 p1_z q1_z^T + i sum_z z^-2 p2_z q2_z^T, column-normalized"""
    n = factors.q1.shape[0]
    weights = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** 2
    real = (factors.p1 * weights) @ factors.q1.T
    imag = (factors.p2 * weights) @ factors.q2.T
    return normalize_columns(real + 1j * imag)


def gen_matrix(ensemble: MatrixEnsemble, rng: np.random.Generator) -> np.ndarray:
    """Draw a sensing matrix with unit-norm columns"""
    m, n = ensemble.m, ensemble.n
    if ensemble.kind is MatrixKind.GAUSSIAN_REAL:
        phi = rng.standard_normal((m, n))
    elif ensemble.kind is MatrixKind.GAUSSIAN_COMPLEX:
        phi = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / math.sqrt(2.0)
    elif ensemble.kind is MatrixKind.PARTIAL_DFT:
        if m > n:
            raise InvalidArgumentError(f"partial DFT needs m <= n, got m={m}, n={n}")
        rows = np.sort(rng.choice(n, size=m, replace=False))
        phi = np.exp(-2j * np.pi * np.outer(rows, np.arange(n)) / n)
    elif ensemble.kind is MatrixKind.CORRELATED_COMPLEX:
        return correlated_from_factors(correlated_factors(m, n, rng))
    else:
        raise InvalidArgumentError(f"Unknown matrix ensemble {ensemble.kind}")
    return normalize_columns(phi)


def fixed_matrix(ensemble: MatrixEnsemble, master_seed: int) -> np.ndarray:
    """The matrix shared by every instance of a fixed-matrix run with this master seed"""
    return gen_matrix(ensemble, make_rng(derive_seed(master_seed, "matrix")))


def _draw_magnitudes(dist: SignalDistribution, size: int, rng: np.random.Generator) -> np.ndarray:
    values = rng.uniform(dist.min_mag, dist.max_mag, size=size)
    if not dist.nonnegative:
        values = values * rng.choice((-1.0, 1.0), size=size)
    return values


def gen_signal(dist: SignalDistribution, n: int, s: int,
               rng: np.random.Generator) -> Tuple[np.ndarray, IndexSet]:
    """An s-sparse vector with support uniform over size-s subsets of {0..n-1}"""
    if s < 0 or s > n:
        raise InvalidArgumentError(f"sparsity must lie in 0..{n}, got {s}")
    x0 = np.zeros(n, dtype=dist.field.dtype)
    if s == 0:
        return x0, ()
    support = tuple(int(i) for i in np.sort(rng.choice(n, size=s, replace=False)))
    values = _draw_magnitudes(dist, s, rng)
    if dist.field is ScalarField.COMPLEX:
        values = values + 1j * _draw_magnitudes(dist, s, rng)
    x0[list(support)] = values
    return x0, support


def noise_sigma(signal_power: float, m: int, snr_db: float) -> float:
    """Per-entry noise standard deviation for ||phi x0||^2 = signal_power"""
    if math.isinf(snr_db) or signal_power == 0:
        return 0.0
    return math.sqrt(signal_power / (m * 10 ** (snr_db / 10)))


def measure(phi: np.ndarray, x0: np.ndarray, snr_db: float,
            rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """y = phi x0 + w with the SNR enforced on this instance"""
    z = phi @ x0
    m = phi.shape[0]
    sigma = noise_sigma(float(np.vdot(z, z).real), m, snr_db)
    if sigma == 0.0:
        w = np.zeros_like(z)
    elif np.iscomplexobj(z):
        w = sigma / math.sqrt(2.0) * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    else:
        w = sigma * rng.standard_normal(m)
    return z + w, w


def make_instance(ensemble: MatrixEnsemble, dist: SignalDistribution, s: int, snr_db: float,
                  seed: int, phi: Optional[np.ndarray] = None) -> ProblemInstance:
    """One seeded instance; pass phi to reuse a fixed matrix"""
    if ensemble.field is not dist.field and dist.field is ScalarField.COMPLEX:
        raise InvalidArgumentError(f"{dist.kind.value} signals need a complex ensemble, got {ensemble.kind.value}")
    rng = make_rng(seed)
    if phi is None:
        phi = gen_matrix(ensemble, rng)
    x0, support = gen_signal(dist, ensemble.n, s, rng)
    if np.iscomplexobj(phi):
        x0 = x0.astype(np.complex128)
    y, w = measure(phi, x0, snr_db, rng)
    return ProblemInstance(phi=phi, x0=x0, support=support, w=w, y=y, snr_db=snr_db, seed=seed)


def instance_checksum(instance: ProblemInstance) -> str:
    """BLAKE2b over the bytes of phi, x0 and w"""
    digest = hashlib.blake2b(digest_size=16)
    for array in (instance.phi, instance.x0, instance.w):
        digest.update(np.ascontiguousarray(array).tobytes())
    return digest.hexdigest()


def _unit_sphere(dim: int, field: ScalarField, rng: np.random.Generator) -> np.ndarray:
    if field is ScalarField.COMPLEX:
        g = rng.standard_normal(2 * dim)
        o = g[:dim] + 1j * g[dim:]
    else:
        o = rng.standard_normal(dim)
    norm = np.linalg.norm(o)
    return o / norm if norm > 0 else o


def gen_training_set(phi: np.ndarray, k1: int, k2: int, v_snr_db: float, dist: SignalDistribution,
                     count: int, rng: np.random.Generator) -> List[TrainingSample]:
    """Noisy measurements of random sparse signals, labelled with their supports"""
    n = phi.shape[1]
    if not 1 <= k1 <= k2 <= n:
        raise InvalidArgumentError(f"need 1 <= k1 <= k2 <= n, got k1={k1}, k2={k2}, n={n}")
    field = ScalarField.COMPLEX if np.iscomplexobj(phi) else ScalarField.REAL
    noise_scale = 0.0 if math.isinf(v_snr_db) else 10 ** (-v_snr_db / 20)
    samples = []
    for _ in range(count):
        s = int(rng.integers(k1, k2 + 1))
        x, support = gen_signal(dist, n, s, rng)
        z = phi @ x
        alpha = rng.uniform(0.0, 1.0)
        beta = np.linalg.norm(z) * noise_scale
        o = _unit_sphere(phi.shape[0], field, rng)
        samples.append(TrainingSample(y=z + alpha * beta * o, support=support))
    return samples


def format_entry(value) -> str:
    if isinstance(value, complex) or np.iscomplexobj(value):
        re, im = float(np.real(value)), float(np.imag(value))
        return f"{re:.17g}{'+' if im >= 0 or math.isnan(im) else '-'}{abs(im):.17g}i"
    return f"{float(value):.17g}"


def parse_entry(text: str):
    text = text.strip()
    if text.endswith("i"):
        return complex(text[:-1] + "j")
    return float(text)


def export_matrix_csv(matrix: np.ndarray, path: Union[str, Path]):
    """One CSV row per matrix row, complex entries written as a+bi"""
    matrix = np.atleast_2d(matrix)
    frame = pd.DataFrame([[format_entry(v) for v in row] for row in matrix])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, header=False, index=False, encoding="utf-8")
    logger.info(f"Wrote {matrix.shape[0]}x{matrix.shape[1]} matrix to {path}")


def import_matrix_csv(path: Union[str, Path]) -> np.ndarray:
    frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, encoding="utf-8")
    rows = [[parse_entry(v) for v in row] for row in frame.itertuples(index=False)]
    is_complex = any(isinstance(v, complex) for row in rows for v in row)
    return np.array(rows, dtype=np.complex128 if is_complex else np.float64)


def export_vector_csv(vector: np.ndarray, path: Union[str, Path]):
    export_matrix_csv(np.asarray(vector).reshape(-1, 1), path)


def import_vector_csv(path: Union[str, Path]) -> np.ndarray:
    return import_matrix_csv(path).reshape(-1)


def export_instance(instance: ProblemInstance, ensemble: MatrixEnsemble, dist: SignalDistribution,
                    directory: Union[str, Path], stem: str = "instance") -> Path:
    """Write phi, x0, y, w as CSV plus the JSON metadata sidecar; returns the sidecar path"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    export_matrix_csv(instance.phi, directory / f"{stem}_phi.csv")
    export_vector_csv(instance.x0, directory / f"{stem}_x0.csv")
    export_vector_csv(instance.y, directory / f"{stem}_y.csv")
    export_vector_csv(instance.w, directory / f"{stem}_w.csv")
    metadata = InstanceMetadata(
        m=instance.m, n=instance.n, s=instance.sparsity, snr_db=instance.snr_db,
        seed=instance.seed, ensemble=ensemble.kind, distribution=dist.kind,
    )
    sidecar = directory / f"{stem}.json"
    sidecar.write_text(metadata.model_dump_json(by_alias=True, indent=2), encoding="utf-8")
    return sidecar


def import_instance(sidecar: Union[str, Path]) -> Tuple[ProblemInstance, InstanceMetadata]:
    sidecar = Path(sidecar)
    metadata = InstanceMetadata.model_validate_json(sidecar.read_text(encoding="utf-8"))
    stem = sidecar.with_suffix("")
    phi = import_matrix_csv(f"{stem}_phi.csv")
    x0 = import_vector_csv(f"{stem}_x0.csv")
    y = import_vector_csv(f"{stem}_y.csv")
    w = import_vector_csv(f"{stem}_w.csv")
    if phi.shape != (metadata.m, metadata.n):
        raise InvalidArgumentError(f"matrix shape {phi.shape} does not match metadata ({metadata.m}, {metadata.n})")
    support = tuple(int(i) for i in np.flatnonzero(x0))
    instance = ProblemInstance(phi=phi, x0=x0, support=support, w=w, y=y,
                               snr_db=metadata.snr_db, seed=metadata.seed)
    return instance, metadata
