"""
ReachDiff Models Package

Pydantic models for environments, trajectories, projector and diffusion
configuration, inverse-dynamics reports and experiment plans.
"""

from src.models.diffusion import Curriculum, CurriculumMode, Modality, NoiseSchedule, ReferenceSource, TrainingConfig
from src.models.environment import EnvSpec, Gate, HeadingAxis, Integrator, PositionLink
from src.models.experiment import ExperimentPlan, Metric, ModelConfig
from src.models.inverse import AdmissibilityReport, IDConfig, IDMethod
from src.models.policy import PolicyConfig
from src.models.projection import ProjectorKind, ProjectorTag, SolverConfig
from src.models.run_config import RunConfig
from src.models.trajectory import Dataset, NormalizationStats, Trajectory

__all__ = [
    # Environment
    "EnvSpec",
    "Gate",
    "HeadingAxis",
    "Integrator",
    "PositionLink",
    # Trajectories
    "Dataset",
    "NormalizationStats",
    "Trajectory",
    # Projection
    "ProjectorKind",
    "ProjectorTag",
    "SolverConfig",
    "PolicyConfig",
    # Diffusion
    "Curriculum",
    "CurriculumMode",
    "Modality",
    "NoiseSchedule",
    "ReferenceSource",
    "TrainingConfig",
    # Inverse dynamics
    "AdmissibilityReport",
    "IDConfig",
    "IDMethod",
    # Experiments
    "ExperimentPlan",
    "Metric",
    "ModelConfig",
    "RunConfig",
]
