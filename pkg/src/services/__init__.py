"""
ReachDiff Services Package

Simulators, reachability and projections, inverse dynamics, diffusion
training and sampling, and experiment evaluation.
"""

from src.services.dynamics import ENV_NAMES, Environment, get_environment, is_admissible, rollout, step
from src.services.inverse_dynamics import id_trajectory, inverse_dynamics
from src.services.projection import project_state, project_trajectory
from src.services.simplex import project_to_hull

__all__ = [
    "ENV_NAMES",
    "Environment",
    "get_environment",
    "id_trajectory",
    "inverse_dynamics",
    "is_admissible",
    "project_state",
    "project_to_hull",
    "project_trajectory",
    "rollout",
    "step",
]
