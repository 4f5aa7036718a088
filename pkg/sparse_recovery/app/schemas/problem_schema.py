import math
from enum import Enum
from typing import Annotated, Any, Tuple, Union

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PlainSerializer, model_validator

from ..core.config import SIGNAL_MAX_MAG, SIGNAL_MIN_MAG


def _parse_snr(value: Any) -> Any:
    if value is None:
        return math.inf
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity", "noiseless"):
        return math.inf
    return value


def _dump_snr(value: float) -> Union[float, str]:
    return "inf" if math.isinf(value) else value


# SNR in dB; infinity means noiseless and is written as "inf" in JSON
SnrDb = Annotated[
    float,
    BeforeValidator(_parse_snr),
    PlainSerializer(_dump_snr, return_type=Union[float, str], when_used="json"),
]


class ScalarField(str, Enum):
    REAL = "real"
    COMPLEX = "complex"

    @property
    def dtype(self):
        return np.complex128 if self is ScalarField.COMPLEX else np.float64


class MatrixKind(str, Enum):
    GAUSSIAN_REAL = "gaussian_real"
    GAUSSIAN_COMPLEX = "gaussian_complex"
    PARTIAL_DFT = "partial_dft"
    CORRELATED_COMPLEX = "correlated_complex"


class SignalKind(str, Enum):
    SYMMETRIC_INTERVAL = "symmetric"
    NONNEGATIVE_INTERVAL = "nonnegative"
    COMPLEX_SYMMETRIC = "complex_symmetric"
    COMPLEX_NONNEGATIVE = "complex_nonnegative"


class MatrixEnsemble(BaseModel):
    """Sensing-matrix ensemble and its dimensions"""
    kind: MatrixKind = MatrixKind.GAUSSIAN_REAL
    m: int = Field(ge=1)
    n: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_dims(self):
        if self.kind is MatrixKind.PARTIAL_DFT and self.m > self.n:
            raise ValueError(f"partial_dft requires m <= n, got m={self.m}, n={self.n}")
        return self

    @property
    def field(self) -> ScalarField:
        return ScalarField.REAL if self.kind is MatrixKind.GAUSSIAN_REAL else ScalarField.COMPLEX


class SignalDistribution(BaseModel):
    """Distribution of the nonzero entries of x0"""
    kind: SignalKind = SignalKind.SYMMETRIC_INTERVAL
    min_mag: float = SIGNAL_MIN_MAG
    max_mag: float = SIGNAL_MAX_MAG

    @model_validator(mode="after")
    def _check_bounds(self):
        if not (0 < self.min_mag < self.max_mag):
            raise ValueError(f"need 0 < min_mag < max_mag, got ({self.min_mag}, {self.max_mag})")
        return self

    @property
    def field(self) -> ScalarField:
        if self.kind in (SignalKind.COMPLEX_SYMMETRIC, SignalKind.COMPLEX_NONNEGATIVE):
            return ScalarField.COMPLEX
        return ScalarField.REAL

    @property
    def nonnegative(self) -> bool:
        return self.kind in (SignalKind.NONNEGATIVE_INTERVAL, SignalKind.COMPLEX_NONNEGATIVE)

    @property
    def min_modulus(self) -> float:
        """Smallest modulus a nonzero entry can take"""
        if self.field is ScalarField.COMPLEX:
            return self.min_mag * math.sqrt(2.0)
        return self.min_mag

    @property
    def rho(self) -> float:
        """Final thresholding level: half the smallest possible nonzero modulus"""
        return self.min_modulus / 2.0


class ProblemInstance(BaseModel):
    """One recovery problem y = phi @ x0 + w"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    phi: np.ndarray
    x0: np.ndarray
    support: Tuple[int, ...]
    w: np.ndarray
    y: np.ndarray
    snr_db: SnrDb = math.inf
    seed: int = 0

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @property
    def n(self) -> int:
        return self.phi.shape[1]

    @property
    def sparsity(self) -> int:
        return len(self.support)


class InstanceMetadata(BaseModel):
    """JSON sidecar written next to an exported instance"""
    m: int
    n: int
    s: int
    snr_db: SnrDb = math.inf
    seed: int = 0
    ensemble: MatrixKind
    distribution: SignalKind
