import math
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic.alias_generators import to_camel

from ..core.config import BASE_LEARNING_RATE, MODEL_FORMAT_VERSION, RMSPROP_DECAY, RMSPROP_EPSILON
from .problem_schema import MatrixEnsemble, ScalarField, SignalDistribution, SnrDb


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"


class LearningRateStage(BaseModel):
    start_epoch: int = Field(ge=1)
    end_epoch: int = Field(ge=1)
    rate: float = Field(gt=0)


def default_schedule(n_epochs: int, base_rate: float = BASE_LEARNING_RATE) -> List[LearningRateStage]:
    """Base rate for the first 62.5% of epochs, then three equal segments at /4, /16, /64"""
    first = max(1, round(n_epochs * 0.625))
    stages = [LearningRateStage(start_epoch=1, end_epoch=first, rate=base_rate)]
    remaining = n_epochs - first
    start = first + 1
    for j in range(1, 4):
        if start > n_epochs:
            break
        end = n_epochs if j == 3 else min(n_epochs, first + round(remaining * j / 3))
        if end < start:
            continue
        stages.append(LearningRateStage(start_epoch=start, end_epoch=end, rate=base_rate / 4 ** j))
        start = end + 1
    return stages


class TrainConfig(BaseModel):
    """Inputs of the training loop for a learned scorer"""
    k1: int = Field(default=1, ge=1)
    k2: int = Field(default=9, ge=1)
    s_d: int = Field(default=20000, ge=1)
    s_b: int = Field(default=250, ge=1)
    n_e: int = Field(default=40, ge=1)
    v_snr_db: SnrDb = math.inf
    learning_rate_schedule: Optional[List[LearningRateStage]] = None
    adaptive_decay: float = Field(default=RMSPROP_DECAY, gt=0, lt=1)
    adaptive_epsilon: float = Field(default=RMSPROP_EPSILON, gt=0)
    hidden_widths: Optional[List[int]] = None
    activations: List[Activation] = Field(default_factory=lambda: [Activation.RELU, Activation.RELU])

    @model_validator(mode="after")
    def _check(self):
        if self.k1 > self.k2:
            raise ValueError(f"k1 must not exceed k2, got k1={self.k1}, k2={self.k2}")
        if self.s_b > self.s_d:
            raise ValueError(f"s_b must not exceed s_d, got s_b={self.s_b}, s_d={self.s_d}")
        if self.learning_rate_schedule is None:
            self.learning_rate_schedule = default_schedule(self.n_e)
        covered = set()
        for stage in self.learning_rate_schedule:
            covered.update(range(stage.start_epoch, stage.end_epoch + 1))
        missing = set(range(1, self.n_e + 1)) - covered
        if missing:
            raise ValueError(f"learning_rate_schedule does not cover epochs {sorted(missing)[:5]}")
        if self.hidden_widths is not None and len(self.hidden_widths) != len(self.activations):
            raise ValueError("hidden_widths and activations must have the same length")
        return self

    def rate_for_epoch(self, epoch: int) -> float:
        for stage in self.learning_rate_schedule:
            if stage.start_epoch <= epoch <= stage.end_epoch:
                return stage.rate
        raise ValueError(f"No learning rate scheduled for epoch {epoch}")


class ScorerEvaluation(BaseModel):
    sparsity: int
    v: int
    trials: int
    snr_db: SnrDb
    mean_overlap: float
    containment_rate: float


class ModelDocument(BaseModel):
    """On-disk layout of a persisted feed-forward scorer"""
    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True)

    format_version: int = MODEL_FORMAT_VERSION
    field: ScalarField
    m: int
    n: int
    layer_dims: List[int]
    activations: List[Activation]
    weights: List[List[List[float]]]
    biases: List[List[float]]
    train_config: Optional[Dict[str, Any]] = None
    training_loss_trace: List[float] = Field(default_factory=list)


class ScorerJobConfig(BaseModel):
    """Document read by train-scorer and eval-scorer"""
    ensemble: MatrixEnsemble
    distribution: SignalDistribution = Field(default_factory=SignalDistribution)
    train: TrainConfig = Field(default_factory=TrainConfig)
    master_seed: int = 0
    matrix_path: Optional[str] = None  # None: the fixed matrix a run with the same master_seed draws
