import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class TsnParams(BaseModel):
    """Steering tuple of the tree search: expansion width, merge count, bound, stage schedule, budget"""
    q: int = Field(ge=1)
    z: int = Field(default=1, ge=1)
    epsilon: Optional[float] = Field(default=None, ge=0)  # None: derive the error bound from the SNR
    stage_depths: List[int] = Field(min_length=1)
    stage_widths: List[int] = Field(min_length=1)
    t_max: float = Field(default=math.inf, ge=0)

    @model_validator(mode="after")
    def _check_stages(self):
        if len(self.stage_depths) != len(self.stage_widths):
            raise ValueError("stage_depths and stage_widths must have the same length")
        if any(v < 1 for v in self.stage_depths + self.stage_widths):
            raise ValueError("stage depths and widths must all be >= 1")
        return self

    @property
    def total_depth(self) -> int:
        return sum(self.stage_depths)

    @classmethod
    def preset(cls, name: str, m: int, n: Optional[int] = None, **overrides) -> "TsnParams":
        """Named parameter tuples used in the recovery experiments, resolved for m rows"""
        presets = {
            "tau1": dict(q=m, z=1, stage_depths=[3, 1], stage_widths=[60, 1], t_max=math.inf),
            "tau2": dict(q=m, z=1, stage_depths=[2, 1, 2, 1], stage_widths=[60, 1, 60, 1], t_max=math.inf),
            "tau3": dict(q=m, z=1, stage_depths=[2, 1, 2, 1], stage_widths=[60, 1, 60, 1], t_max=5.0),
            "wide": dict(q=min(200, n or 200), z=110, stage_depths=[1, 1], stage_widths=[1, 1], t_max=math.inf),
            "scalable": dict(q=m, z=1, stage_depths=[2, 1] * 4, stage_widths=[60, 1] * 4, t_max=10.0),
        }
        if name not in presets:
            raise ValueError(f"Unknown TSN preset '{name}', expected one of {sorted(presets)}")
        params = presets[name]
        params.update(overrides)
        return cls(**params)


class Termination(str, Enum):
    EPSILON_HIT = "epsilon_hit"
    BUDGET_EXHAUSTED = "budget_exhausted"
    TREE_EXHAUSTED = "tree_exhausted"


class TsnResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    support_estimate: Tuple[int, ...]
    signal_estimate: np.ndarray
    k_support: Tuple[int, ...]
    residual: float
    terminated: Termination
    elapsed_seconds: float
    nodes_expanded: int
    residual_trace: List[float] = Field(default_factory=list)
