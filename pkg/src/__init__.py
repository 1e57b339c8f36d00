"""
ReachDiff - Diffusion policies for dynamically admissible trajectories

Trains small diffusion models on trajectories of black-box discrete-time
systems and enforces admissibility with reachable-set projections during
training and inference, verified by ground-truth inverse dynamics.
"""

__version__ = "0.1.0"
__author__ = "ReachDiff Team"
