"""
ReachDiff Diffusion Models

Noise schedule, projection curriculum and training configuration records.
These travel in checkpoint headers.
"""

import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_serializer, model_validator

from src.config import Settings


class Modality(str, Enum):
    """What the denoiser predicts."""
    S = "S"  # states
    SA = "SA"  # states and actions
    A = "A"  # actions, conditioned on the initial state


class CurriculumMode(str, Enum):
    """Named projection curricula."""
    PRE = "pre"  # project at every denoising step
    MID = "mid"  # project increasingly often as noise decreases
    POST = "post"  # project only at the final step
    OFF = "off"  # never project


class ReferenceSource(str, Enum):
    """
    Inference-time reference for the Pref projector.

    With SAMPLE the reference is the prediction itself, so Pref reduces to
    plain P at inference; DENOISED pulls toward the clean estimate instead.
    """
    SAMPLE = "sample"  # pre-projection sample of the current iteration
    DENOISED = "denoised"  # denoiser estimate of the current iteration


class NoiseSchedule(BaseModel):
    """Inference σ ladder and the training noise distribution."""
    model_config = ConfigDict(frozen=True)

    steps: int = Field(default=5, ge=2)
    sigma_first: float = Field(default=80.0, gt=0.0)
    sigma_last: float = Field(default=0.002, gt=0.0)
    rho: float = Field(default=7.0, gt=0.0)
    p_mean: float = -1.2
    p_std: float = Field(default=1.2, gt=0.0)

    @classmethod
    def from_settings(cls, settings: Settings, steps: int | None = None) -> "NoiseSchedule":
        return cls(
            steps=steps or settings.schedule_steps,
            sigma_first=settings.sigma_first,
            sigma_last=settings.sigma_last,
            rho=settings.rho,
            p_mean=settings.p_mean,
            p_std=settings.p_std,
        )


class Curriculum(BaseModel):
    """
    Projection-skip probability p(σ).

    p = 1 above sigma_max, 0 below sigma_min and linear in between. At
    σ = sigma_min = sigma_max the lower branch applies. Infinite bounds
    mean projection is never applied.
    """
    model_config = ConfigDict(frozen=True)

    mode: CurriculumMode = CurriculumMode.MID
    sigma_min: float = Field(default=0.0021, gt=0.0)
    sigma_max: float = Field(default=0.2, gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> "Curriculum":
        if self.sigma_min > self.sigma_max:
            raise ValueError("curriculum requires sigma_min <= sigma_max")
        return self

    @field_serializer("sigma_min", "sigma_max")
    def _encode_bound(self, value: float) -> float | str:
        # JSON has no infinity literal
        return "inf" if math.isinf(value) else value

    @classmethod
    def from_mode(
        cls, mode: CurriculumMode, sigma_min: float | None = None, sigma_max: float | None = None
    ) -> "Curriculum":
        """Preset bounds per mode; explicit bounds override the preset."""
        presets = {
            CurriculumMode.PRE: (80.0, 80.0),
            CurriculumMode.MID: (0.0021, 0.2),
            CurriculumMode.POST: (0.0021, 0.0021),
            CurriculumMode.OFF: (math.inf, math.inf),
        }
        lo, hi = presets[mode]
        return cls(
            mode=mode,
            sigma_min=lo if sigma_min is None else sigma_min,
            sigma_max=hi if sigma_max is None else sigma_max,
        )

    @property
    def never_projects(self) -> bool:
        return math.isinf(self.sigma_min)

    def skip_probability(self, sigma: float) -> float:
        """p(σ): probability that a transition is left unprojected."""
        if self.never_projects or sigma > self.sigma_max:
            return 1.0
        if sigma < self.sigma_min or self.sigma_max == self.sigma_min:
            return 0.0
        return (sigma - self.sigma_min) / (self.sigma_max - self.sigma_min)


class TrainingConfig(BaseModel):
    """Denoiser architecture and optimizer settings."""
    model_config = ConfigDict(frozen=True)

    steps: int = Field(default=2000, ge=0)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    grad_clip: float = Field(default=1.0, gt=0.0)
    width: int = Field(default=64, ge=4)
    kernel: int = Field(default=5, ge=1)
    embed_dim: int = Field(default=32, ge=2)
    seed: int = 0
    log_every: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _odd_kernel(self) -> "TrainingConfig":
        if self.kernel % 2 == 0:
            raise ValueError("kernel must be odd")
        if self.embed_dim % 2:
            raise ValueError("embed_dim must be even")
        return self

    @classmethod
    def from_settings(cls, settings: Settings, seed: int = 0, steps: int | None = None) -> "TrainingConfig":
        return cls(
            steps=settings.train_steps if steps is None else steps,
            batch_size=settings.batch_size,
            learning_rate=settings.learning_rate,
            grad_clip=settings.grad_clip,
            width=settings.denoiser_width,
            kernel=settings.denoiser_kernel,
            embed_dim=settings.sigma_embed_dim,
            seed=seed,
        )
