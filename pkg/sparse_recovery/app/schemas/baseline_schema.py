from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.config import EPSILON_FLOOR, GOMP_PER_ITERATION, MMP_EXPANSION


class BaselineKind(str, Enum):
    OMP = "omp"
    GOMP = "gomp"
    SP = "sp"
    COSAMP = "cosamp"
    IHT = "iht"
    MMP_DF = "mmp_df"
    SBL = "sbl"


class BaselineSpec(BaseModel):
    """Which classical algorithm to run and its knobs"""
    kind: BaselineKind
    sparsity: int = Field(ge=1)
    per_iteration: int = Field(default=GOMP_PER_ITERATION, ge=1)
    expansion: int = Field(default=MMP_EXPANSION, ge=1)
    n_max: Optional[int] = Field(default=None, ge=1)  # None: L^s, the full MMP tree
    max_iter: Optional[int] = Field(default=None, ge=1)  # None: per-kind default cap
    epsilon: float = Field(default=EPSILON_FLOOR, ge=0)
    eta2: Optional[float] = Field(default=None, gt=0)  # SBL only; None: noise floor rule


class RecoveryOutput(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    support_estimate: Tuple[int, ...]
    signal_estimate: np.ndarray
    residual_norm: float
    iterations: int
