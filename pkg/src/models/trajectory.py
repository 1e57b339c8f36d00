"""
ReachDiff Trajectory Models

Trajectories, datasets and per-channel normalization statistics.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.core.exceptions import RejectedInputError
from src.models.environment import EnvSpec

MIN_SCALE = 1e-6


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Time-indexed state sequence of length H+1, optionally paired with H actions.

    `admissible` is a claim: when true, re-simulating the actions from
    states[0] must reproduce the states bit-exactly.
    """
    states: np.ndarray
    actions: np.ndarray | None = None
    admissible: bool = False

    def __post_init__(self) -> None:
        states = np.array(self.states, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] < 1:
            raise RejectedInputError("states must be a (H+1, n_states) array")
        object.__setattr__(self, "states", states)
        if self.actions is not None:
            actions = np.array(self.actions, dtype=np.float64)
            if actions.ndim != 2 or actions.shape[0] != states.shape[0] - 1:
                raise RejectedInputError(
                    "actions must be a (H, n_actions) array matching the states",
                    states=states.shape,
                    actions=actions.shape,
                )
            object.__setattr__(self, "actions", actions)

    @property
    def horizon(self) -> int:
        return int(self.states.shape[0] - 1)

    @property
    def has_actions(self) -> bool:
        return self.actions is not None

    def check_env(self, env: EnvSpec) -> None:
        """Raise if lengths or widths disagree with the environment."""
        if self.states.shape != (env.horizon + 1, env.n_states):
            raise RejectedInputError(
                f"trajectory states {self.states.shape} do not match env "
                f"{env.name} ({env.horizon + 1}, {env.n_states})"
            )
        if self.actions is not None and self.actions.shape != (env.horizon, env.n_actions):
            raise RejectedInputError(
                f"trajectory actions {self.actions.shape} do not match env "
                f"{env.name} ({env.horizon}, {env.n_actions})"
            )

    def replace(self, **changes: Any) -> "Trajectory":
        return replace(self, **changes)


class NormalizationStats(BaseModel):
    """Per-channel z-score statistics for states and actions."""
    model_config = ConfigDict(frozen=True)

    state_mean: tuple[float, ...]
    state_scale: tuple[float, ...]
    action_mean: tuple[float, ...]
    action_scale: tuple[float, ...]

    @classmethod
    def identity(cls, n_states: int, n_actions: int) -> "NormalizationStats":
        return cls(
            state_mean=(0.0,) * n_states,
            state_scale=(1.0,) * n_states,
            action_mean=(0.0,) * n_actions,
            action_scale=(1.0,) * n_actions,
        )

    @classmethod
    def from_trajectories(
        cls, trajectories: Sequence[Trajectory], n_states: int, n_actions: int
    ) -> "NormalizationStats":
        """Compute channel statistics; constant channels get unit scale."""
        if not trajectories:
            return cls.identity(n_states, n_actions)
        states = np.concatenate([t.states for t in trajectories], axis=0)
        s_mean, s_scale = _mean_scale(states)
        with_actions = [t.actions for t in trajectories if t.actions is not None]
        if with_actions:
            a_mean, a_scale = _mean_scale(np.concatenate(with_actions, axis=0))
        else:
            a_mean, a_scale = np.zeros(n_actions), np.ones(n_actions)
        return cls(
            state_mean=tuple(float(v) for v in s_mean),
            state_scale=tuple(float(v) for v in s_scale),
            action_mean=tuple(float(v) for v in a_mean),
            action_scale=tuple(float(v) for v in a_scale),
        )

    def normalize_states(self, states: np.ndarray) -> np.ndarray:
        return (states - np.asarray(self.state_mean)) / np.asarray(self.state_scale)

    def denormalize_states(self, states: np.ndarray) -> np.ndarray:
        return states * np.asarray(self.state_scale) + np.asarray(self.state_mean)

    def normalize_actions(self, actions: np.ndarray) -> np.ndarray:
        return (actions - np.asarray(self.action_mean)) / np.asarray(self.action_scale)

    def denormalize_actions(self, actions: np.ndarray) -> np.ndarray:
        return actions * np.asarray(self.action_scale) + np.asarray(self.action_mean)


def _mean_scale(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = values.mean(axis=0)
    scale = values.std(axis=0)
    scale = np.where(scale < MIN_SCALE, np.where(scale == 0.0, 1.0, MIN_SCALE), scale)
    return mean, scale


@dataclass(frozen=True, eq=False)
class Dataset:
    """Admissible trajectories of one environment plus normalization stats."""
    env: EnvSpec
    trajectories: list[Trajectory]
    stats: NormalizationStats
    metadata: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def has_actions(self) -> bool:
        return bool(self.trajectories) and all(t.has_actions for t in self.trajectories)

    def transitions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stack all (s_t, a_t, s_{t+1}) triplets."""
        if not self.has_actions:
            raise RejectedInputError("dataset has no actions")
        s = np.concatenate([t.states[:-1] for t in self.trajectories], axis=0)
        a = np.concatenate([t.actions for t in self.trajectories if t.actions is not None], axis=0)
        s_next = np.concatenate([t.states[1:] for t in self.trajectories], axis=0)
        return s, a, s_next
