"""
ReachDiff Inverse Dynamics Models

Solver configuration and the admissibility report produced by
trajectory-level inverse dynamics.
"""

import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, computed_field

from src.config import Settings
from src.models.projection import SolverConfig


class IDMethod(str, Enum):
    """Inverse dynamics solver."""
    POLYTOPIC = "polytopic"
    BLACKBOX = "blackbox"
    COMBINED = "polytopic-then-blackbox"
    ANALYTIC_LINEAR = "analytic-linear"


class IDConfig(BaseModel):
    """Inverse dynamics settings; eps None selects eps_linear or eps_nonlinear by environment."""
    model_config = ConfigDict(frozen=True)

    method: IDMethod = IDMethod.COMBINED
    eps: float | None = Field(default=None, gt=0.0)
    eps_linear: float = Field(default=1e-9, gt=0.0)
    eps_nonlinear: float = Field(default=1e-7, gt=0.0)
    polytopic_iters: int = Field(default=50, ge=1)
    blackbox_iters: int = Field(default=500, ge=1)
    delta: float = Field(default=0.5, gt=0.0, lt=1.0)
    seed: int = 0
    solver: SolverConfig = Field(default_factory=SolverConfig)

    def tolerance(self, is_linear: bool) -> float:
        """Convergence tolerance on the state residual."""
        if self.eps is not None:
            return self.eps
        return self.eps_linear if is_linear else self.eps_nonlinear

    @classmethod
    def from_settings(cls, settings: Settings, method: IDMethod = IDMethod.COMBINED, seed: int = 0) -> "IDConfig":
        return cls(
            method=method,
            eps_linear=settings.id_eps_linear,
            eps_nonlinear=settings.id_eps_nonlinear,
            polytopic_iters=settings.id_polytopic_iters,
            blackbox_iters=settings.id_blackbox_iters,
            delta=settings.id_delta,
            seed=seed,
            solver=SolverConfig.from_settings(settings),
        )


class AdmissibilityReport(BaseModel):
    """Per-step inverse dynamics results over the re-based chain."""

    env: str
    sae: list[float]
    cae: float
    actions: list[list[float]]
    iterations: list[int]
    converged: list[bool]
    known_action: list[bool]
    tolerance: float

    @computed_field  # type: ignore[prop-decorator]
    @property
    def mean_sae(self) -> float:
        return math.fsum(self.sae) / len(self.sae) if self.sae else 0.0

    @computed_field  # type: ignore[prop-decorator]
    @property
    def max_sae(self) -> float:
        return max(self.sae, default=0.0)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def not_converged(self) -> int:
        return sum(1 for ok in self.converged if not ok)
