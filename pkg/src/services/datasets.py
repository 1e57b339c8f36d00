"""
ReachDiff Dataset Service

Reading and writing trajectory containers (datasets and sampled
trajectory files), admissibility re-checks at load time and the
JSON-lines inspection export.
"""

from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
import structlog
from pydantic import ValidationError

from src.core.exceptions import ArtifactFormatError, DatasetIntegrityError
from src.core.storage import read_container, write_container, write_jsonl
from src.models.environment import EnvSpec
from src.models.trajectory import Dataset, NormalizationStats, Trajectory
from src.services.dynamics import env_from_spec, is_admissible

logger = structlog.get_logger(__name__)


def _pack(trajectories: Sequence[Trajectory]) -> np.ndarray:
    blocks: list[np.ndarray] = []
    for traj in trajectories:
        blocks.append(traj.states.reshape(-1))
        if traj.actions is not None:
            blocks.append(traj.actions.reshape(-1))
    return np.concatenate(blocks) if blocks else np.zeros(0)


def _unpack(
    payload: np.ndarray, env: EnvSpec, has_actions: Sequence[bool], claims: Sequence[bool]
) -> list[Trajectory]:
    H, n, m = env.horizon, env.n_states, env.n_actions
    expected = sum((H + 1) * n + (H * m if flag else 0) for flag in has_actions)
    if payload.size != expected:
        raise ArtifactFormatError(
            f"Trajectory payload holds {payload.size} values, header implies {expected}"
        )
    out: list[Trajectory] = []
    offset = 0
    for flag, claim in zip(has_actions, claims, strict=True):
        states = payload[offset : offset + (H + 1) * n].reshape(H + 1, n)
        offset += (H + 1) * n
        actions = None
        if flag:
            actions = payload[offset : offset + H * m].reshape(H, m)
            offset += H * m
        out.append(Trajectory(states=states, actions=actions, admissible=bool(claim)))
    return out


def _trajectory_header(env: EnvSpec, trajectories: Sequence[Trajectory]) -> dict[str, Any]:
    for traj in trajectories:
        traj.check_env(env)
    return {
        "env": env.model_dump(mode="json"),
        "n_trajectories": len(trajectories),
        "has_actions": [t.has_actions for t in trajectories],
        "admissible": [t.admissible for t in trajectories],
    }


def _parse_env(header: dict[str, Any]) -> EnvSpec:
    try:
        return EnvSpec.model_validate(header["env"])
    except (KeyError, ValidationError) as e:
        raise ArtifactFormatError(f"Artifact header has no valid env record: {e}")


def failing_claims(env_spec: EnvSpec, trajectories: Sequence[Trajectory]) -> list[int]:
    """Indices of trajectories that claim admissibility but fail re-simulation."""
    env = env_from_spec(env_spec)
    return [
        i for i, traj in enumerate(trajectories)
        if traj.admissible and not is_admissible(env, traj)
    ]


# ═════════════════════════════════════════════════════════════════════════
# Datasets
# ═════════════════════════════════════════════════════════════════════════

def save_dataset(path: Path, dataset: Dataset, run_config: dict[str, Any] | None = None) -> Path:
    """
    Write a dataset container.

    Args:
        path: Destination file
        dataset: Dataset to store
        run_config: Resolved configuration echoed into the header

    Returns:
        The written path
    """
    header = {
        **_trajectory_header(dataset.env, dataset.trajectories),
        "stats": dataset.stats.model_dump(mode="json"),
        "metadata": dataset.metadata,
        "run_config": run_config or {},
    }
    written = write_container(path, "dataset", header, _pack(dataset.trajectories))
    logger.info("Dataset saved", path=str(path), n_traj=len(dataset))
    return written


def load_dataset(path: Path, verify: bool = True) -> Dataset:
    """
    Read a dataset container.

    Args:
        path: Dataset file
        verify: Re-simulate every trajectory and reject inadmissible ones

    Raises:
        DatasetIntegrityError: a stored trajectory fails re-simulation
    """
    header, payload = read_container(path, "dataset")
    env = _parse_env(header)
    trajectories = _unpack(payload, env, header["has_actions"], header["admissible"])
    if verify:
        simulator = env_from_spec(env)
        bad = [
            i for i, t in enumerate(trajectories)
            if not t.admissible or not is_admissible(simulator, t)
        ]
        if bad:
            raise DatasetIntegrityError(
                f"{len(bad)} dataset trajectories fail re-simulation", indices=bad, path=str(path)
            )
    return Dataset(
        env=env,
        trajectories=trajectories,
        stats=NormalizationStats.model_validate(header["stats"]),
        metadata=header.get("metadata", {}),
    )


def export_jsonl(path: Path, dataset: Dataset) -> Path:
    """One JSON object per trajectory: index, states, actions."""
    records = (
        {
            "index": i,
            "env": dataset.env.name,
            "states": traj.states.tolist(),
            "actions": None if traj.actions is None else traj.actions.tolist(),
        }
        for i, traj in enumerate(dataset.trajectories)
    )
    return write_jsonl(path, records)


# ═════════════════════════════════════════════════════════════════════════
# Trajectory files (sampled or projected outputs)
# ═════════════════════════════════════════════════════════════════════════

def save_trajectories(
    path: Path,
    env: EnvSpec,
    trajectories: Sequence[Trajectory],
    metadata: dict[str, Any] | None = None,
    run_config: dict[str, Any] | None = None,
) -> Path:
    """Write a trajectories container with per-trajectory admissibility claims."""
    header = {
        **_trajectory_header(env, trajectories),
        "metadata": metadata or {},
        "run_config": run_config or {},
    }
    return write_container(path, "trajectories", header, _pack(trajectories))


def load_trajectories(path: Path) -> tuple[EnvSpec, list[Trajectory], dict[str, Any]]:
    """
    Read a trajectories container.

    Returns:
        Tuple of (env spec, trajectories, header)
    """
    header, payload = read_container(path, "trajectories")
    env = _parse_env(header)
    return env, _unpack(payload, env, header["has_actions"], header["admissible"]), header
