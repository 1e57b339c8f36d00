"""
ReachDiff Experiment Models

Batch comparison plans: several trained models of one environment,
sampled from shared initial states and scored on shared metrics.
"""

from enum import Enum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.diffusion import CurriculumMode, ReferenceSource
from src.models.inverse import IDMethod
from src.models.projection import ProjectorKind


class Metric(str, Enum):
    """Per-sample metrics reported by experiments."""
    SAE = "SAE"
    CAE = "CAE"
    SURVIVAL = "survival-fraction"
    REWARD = "reward-proxy"
    TASK_COMPLETION = "task-completion"


class ModelConfig(BaseModel):
    """One compared configuration: a checkpoint plus inference overrides."""
    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    checkpoint: Path
    projector: ProjectorKind | None = None
    curriculum: CurriculumMode | None = None
    use_projection: bool = True
    reference: ReferenceSource = ReferenceSource.SAMPLE


class ExperimentPlan(BaseModel):
    """Comparison protocol over one environment."""
    model_config = ConfigDict(frozen=True)

    env: str
    models: list[ModelConfig] = Field(min_length=1)
    n_initial_states: int = Field(default=10, ge=1)
    samples_per_state: int = Field(default=8, ge=1)
    metrics: list[Metric] = Field(default_factory=lambda: list(Metric))
    seeds: list[int] = Field(default_factory=lambda: [0])
    selection_metric: Literal["survival", "reward", "task-completion"] = "survival"
    id_method: IDMethod = IDMethod.COMBINED

    @field_validator("metrics")
    @classmethod
    def _non_empty(cls, value: list[Metric]) -> list[Metric]:
        if not value:
            raise ValueError("metric set must be non-empty")
        return value

    @model_validator(mode="after")
    def _unique_names(self) -> "ExperimentPlan":
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ValueError("model names must be unique")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        return self
