import math
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from ..core.config import DEFAULT_WORKERS, EXACT_TOL
from .baseline_schema import BaselineKind
from .problem_schema import MatrixEnsemble, SignalDistribution, SnrDb
from .tsn_schema import TsnParams


class BaselineOptions(BaseModel):
    kind: BaselineKind
    per_iteration: Optional[int] = Field(default=None, ge=1)
    expansion: Optional[int] = Field(default=None, ge=1)
    n_max: Optional[int] = Field(default=None, ge=1)
    max_iter: Optional[int] = Field(default=None, ge=1)


class TsnOptions(BaseModel):
    preset: Optional[str] = "tau1"
    params: Optional[TsnParams] = None  # explicit tuple, wins over preset
    k: Optional[int] = Field(default=None, ge=0)  # None: largest sparsity of the sweep
    scorer: str = "correlation"  # correlation | random | oracle | path to a model JSON
    known_sparsity: bool = False


class AlgorithmConfig(BaseModel):
    name: str
    baseline: Optional[BaselineOptions] = None
    tsn: Optional[TsnOptions] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.baseline is None) == (self.tsn is None):
            raise ValueError(f"algorithm '{self.name}' needs exactly one of 'baseline' or 'tsn'")
        return self


class ExperimentConfig(BaseModel):
    """A Monte-Carlo sweep: ensemble x distribution x sparsity x SNR, paired across algorithms"""
    ensemble: MatrixEnsemble
    distribution: SignalDistribution = Field(default_factory=SignalDistribution)
    sparsity_range: List[int] = Field(min_length=1)
    snr_db: Union[SnrDb, List[SnrDb]] = math.inf
    trials: int = Field(default=100, ge=1)
    master_seed: int = 0
    algorithms: List[AlgorithmConfig] = Field(min_length=1)
    exact_tol: float = Field(default=EXACT_TOL, gt=0)
    workers: int = Field(default=DEFAULT_WORKERS, ge=1)
    matrix_mode: Literal["resample", "fixed"] = "resample"
    matrix_path: Optional[str] = None
    time_budget: Optional[float] = Field(default=None, ge=0)

    @field_validator("sparsity_range")
    @classmethod
    def _nonnegative(cls, value: List[int]) -> List[int]:
        if any(s < 0 for s in value):
            raise ValueError("sparsities must be >= 0")
        return sorted(set(value))

    @model_validator(mode="after")
    def _check(self):
        names = [a.name for a in self.algorithms]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"algorithm names must be unique, duplicated: {duplicates}")
        if max(self.sparsity_range) > self.ensemble.n:
            raise ValueError("sparsity cannot exceed n")
        if self.matrix_path is not None:
            self.matrix_mode = "fixed"
        return self

    @property
    def snr_levels(self) -> List[float]:
        return list(self.snr_db) if isinstance(self.snr_db, list) else [self.snr_db]


class TrialMetrics(BaseModel):
    algorithm: str
    sparsity: int
    snr_db: SnrDb
    trial: int
    seed: int
    instance_checksum: str
    exact_recovery: bool
    support_recovery: bool
    rel_error: float = Field(ge=0)
    noise_bound_success: bool
    noise_bound_rule: Literal["noise_norm", "exact_tol"]  # which side of max(||w||, exact_tol ||phi x0||) applied
    support_overlap: float = Field(ge=0, le=1)
    support_size: int
    wall_seconds: float = Field(ge=0)


class SummaryRow(BaseModel):
    algorithm: str
    sparsity: int
    snr_db: SnrDb
    mean_rel_error: float
    recovery_rate: float = Field(ge=0, le=1)
    support_rate: float = Field(ge=0, le=1)
    noise_bound_rate: float = Field(ge=0, le=1)
    mean_overlap: float
    mean_wall_seconds: float
    trials: int
