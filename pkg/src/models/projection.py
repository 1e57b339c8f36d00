"""
ReachDiff Projection Models

Projector selection shared by training, sampling and the CLI.
"""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from src.config import Settings


class ProjectorTag(str, Enum):
    """Projector family."""
    P = "P"  # hull projection
    PREF = "Pref"  # hull projection pulled toward a reference
    PA = "PA"  # execute the predicted action
    PSA = "PSA"  # execute the predicted action plus a learned correction


class ProjectorKind(BaseModel):
    """Projector plus its tuning knobs."""
    model_config = ConfigDict(frozen=True)

    tag: ProjectorTag = ProjectorTag.P
    lambda_ref: float = Field(default=1.0, ge=0.0, description="Reference trade-off coefficient")
    delta: float = Field(default=0.1, gt=0.0, lt=1.0, description="Shrink fraction of the action search box")
    action_guided: bool = Field(default=False, description="Search a shrunk box around the predicted action")
    use_reduction: bool = Field(default=True, description="Project actuated components only")

    @property
    def needs_reference(self) -> bool:
        return self.tag == ProjectorTag.PREF

    @property
    def needs_actions(self) -> bool:
        return self.action_guided or self.tag in (ProjectorTag.PA, ProjectorTag.PSA)

    @property
    def action_backed(self) -> bool:
        """Outputs are simulator successors, hence admissible."""
        return self.tag in (ProjectorTag.PA, ProjectorTag.PSA)

    @property
    def label(self) -> str:
        return f"{self.tag.value}{'+guided' if self.action_guided else ''}"


class SolverConfig(BaseModel):
    """Iteration caps of the hull projection and the reference projection."""
    model_config = ConfigDict(frozen=True)

    simplex_max_iter: int = Field(default=200, ge=1)
    simplex_tol: float = Field(default=1e-8, gt=0.0)
    ref_max_iter: int = Field(default=100, ge=1)

    @classmethod
    def from_settings(cls, settings: Settings) -> "SolverConfig":
        return cls(
            simplex_max_iter=settings.simplex_max_iter,
            simplex_tol=settings.simplex_tol,
            ref_max_iter=settings.ref_max_iter,
        )
