import math
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.config import ETA2_FLOOR, SBL_GAMMA_FLOOR, SBL_GAMMA_INIT, SBL_MAX_ITER


class SblConfig(BaseModel):
    """Settings of the SBL ridge regression"""
    eta2: float = Field(default=ETA2_FLOOR, ge=0)
    max_iter: int = Field(default=SBL_MAX_ITER, ge=0)
    gamma_init: float = Field(default=SBL_GAMMA_INIT, gt=0)
    gamma_floor: float = Field(default=SBL_GAMMA_FLOOR, gt=0)
    noiseless: bool = False

    @classmethod
    def from_snr(cls, y: np.ndarray, snr_db: float, **overrides) -> "SblConfig":
        """Noiseless config for an infinite SNR, else eta2 = max((||y|| 10^(-snr/20))^2 / m, 1e-4)"""
        if math.isinf(snr_db) and snr_db > 0:
            return cls(noiseless=True, **overrides)
        m = y.shape[0]
        eta2 = max((np.linalg.norm(y) * 10 ** (-snr_db / 20)) ** 2 / m, ETA2_FLOOR)
        return cls(eta2=eta2, **overrides)


class RidgeSolution(BaseModel):
    """Coefficients on an extended support, their prior variances and the evidence trace"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    support: Tuple[int, ...]
    coeffs: np.ndarray
    gamma: np.ndarray
    cost_trace: List[float] = Field(default_factory=list)
