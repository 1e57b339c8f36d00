"""
ReachDiff Correction Policy

Small feedforward network mapping the gap between a predicted next state
and the successor of the predicted action to an action correction δa.
Trained on admissible triplets extracted from a dataset: each recorded
action is perturbed, re-simulated, and the network learns to recover the
perturbation from the resulting state offset.
"""

from pathlib import Path
from typing import Any

import numpy as np
import structlog
import torch
from torch import nn

from src.core.exceptions import CheckpointMismatchError, ConfigurationError
from src.core.storage import read_container, write_container
from src.models.environment import EnvSpec
from src.models.policy import PolicyConfig
from src.models.trajectory import Dataset
from src.services.dynamics import Environment, step_checked

logger = structlog.get_logger(__name__)

EVAL_BATCH = 1024


class CorrectionNetwork(nn.Module):
    """Two tanh hidden layers, float64."""

    def __init__(self, n_states: int, n_actions: int, width: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(n_states, width),
            nn.Tanh(),
            nn.Linear(width, width),
            nn.Tanh(),
            nn.Linear(width, n_actions),
        ).double()

    def forward(self, residual: torch.Tensor) -> torch.Tensor:
        return self.net(residual)


class CorrectionPolicy:
    """Trained correction network with its input/output scaling."""

    def __init__(
        self,
        env: EnvSpec,
        network: CorrectionNetwork,
        residual_scale: np.ndarray,
        action_scale: np.ndarray,
        config: PolicyConfig,
        loss_trace: list[float] | None = None,
    ):
        self.env = env
        self.network = network.eval()
        self.residual_scale = np.asarray(residual_scale, dtype=np.float64)
        self.action_scale = np.asarray(action_scale, dtype=np.float64)
        self.config = config
        self.loss_trace = loss_trace or []

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else float("nan")

    def correct(self, residual: np.ndarray) -> np.ndarray:
        """δa for a state residual (predicted next state − uncorrected successor)."""
        scaled = np.asarray(residual, dtype=np.float64).reshape(-1, self.env.n_states) / self.residual_scale
        with torch.no_grad():
            out = self.network(torch.from_numpy(scaled)).numpy()
        delta = out * self.action_scale
        return delta[0] if np.ndim(residual) == 1 else delta

    # ─────────────────────────────────────────────────────────────────────
    # Serialization
    # ─────────────────────────────────────────────────────────────────────

    def to_record(self) -> tuple[dict[str, Any], np.ndarray]:
        """Header fields and flat parameter vector."""
        header = {
            "env": self.env.model_dump(mode="json"),
            "config": self.config.model_dump(mode="json"),
            "residual_scale": self.residual_scale.tolist(),
            "action_scale": self.action_scale.tolist(),
            "loss_trace": list(self.loss_trace),
        }
        params = nn.utils.parameters_to_vector(self.network.parameters()).detach().numpy()
        return header, params

    @classmethod
    def from_record(cls, header: dict[str, Any], params: np.ndarray) -> "CorrectionPolicy":
        env = EnvSpec.model_validate(header["env"])
        config = PolicyConfig.model_validate(header["config"])
        network = CorrectionNetwork(env.n_states, env.n_actions, config.width)
        expected = sum(p.numel() for p in network.parameters())
        if params.size != expected:
            raise CheckpointMismatchError(
                f"Policy parameter block holds {params.size} values, network needs {expected}"
            )
        nn.utils.vector_to_parameters(torch.from_numpy(params.copy()), network.parameters())
        return cls(
            env=env,
            network=network,
            residual_scale=np.asarray(header["residual_scale"]),
            action_scale=np.asarray(header["action_scale"]),
            config=config,
            loss_trace=list(header.get("loss_trace", [])),
        )


def _perturbed_triplets(
    env: Environment, dataset: Dataset, sigma: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Residual inputs and applied (post-clamp) corrections."""
    s, a, s_next = dataset.transitions()
    noise = rng.normal(0.0, 1.0, size=a.shape) * sigma
    applied = np.empty_like(a)
    residuals = np.empty_like(s)
    for i in range(s.shape[0]):
        a_delta, _ = env.clamp_action(a[i] + noise[i])
        applied[i] = a_delta - a[i]
        s_delta, _ = step_checked(env, s[i], a_delta)
        residuals[i] = s_delta - s_next[i]
    return residuals, applied


def train_correction_policy(
    env: Environment, dataset: Dataset, config: PolicyConfig | None = None
) -> CorrectionPolicy:
    """
    Fit the correction network on perturbed dataset transitions.

    Args:
        env: Environment the dataset was generated on
        dataset: Dataset with actions
        config: Training configuration (defaults from PolicyConfig)

    Returns:
        CorrectionPolicy with its loss trace on a fixed evaluation batch
    """
    config = config or PolicyConfig()
    log = logger.bind(service="CorrectionPolicy", env=env.name)
    if not dataset.has_actions:
        raise ConfigurationError("Correction policy training requires a dataset with actions")

    rng = np.random.default_rng(config.seed)
    half_width = (env.action_high - env.action_low) / 2.0
    action_scale = np.where(half_width > 0.0, half_width, 1.0)
    residuals, deltas = _perturbed_triplets(env, dataset, config.sigma_fraction * half_width, rng)
    residual_scale = residuals.std(axis=0)
    residual_scale = np.where(residual_scale > 1e-12, residual_scale, 1.0)

    inputs = torch.from_numpy(residuals / residual_scale)
    targets = torch.from_numpy(deltas / action_scale)
    n = inputs.shape[0]
    eval_idx = torch.arange(min(n, EVAL_BATCH))

    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    network = CorrectionNetwork(env.spec.n_states, env.spec.n_actions, config.width)
    optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate)
    loss_fn = nn.MSELoss()

    def eval_loss() -> float:
        with torch.no_grad():
            return float(loss_fn(network(inputs[eval_idx]), targets[eval_idx]))

    loss_trace = [eval_loss()]
    for step in range(1, config.steps + 1):
        batch = torch.randint(0, n, (min(config.batch_size, n),), generator=generator)
        loss = loss_fn(network(inputs[batch]), targets[batch])
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        if step % 100 == 0 or step == config.steps:
            loss_trace.append(eval_loss())
            log.debug("Policy training step", step=step, loss=loss_trace[-1])

    log.info("Correction policy trained", steps=config.steps, initial_loss=loss_trace[0], final_loss=loss_trace[-1])
    return CorrectionPolicy(env.spec, network, residual_scale, action_scale, config, loss_trace)


def save_policy(path: Path, policy: CorrectionPolicy, run_config: dict[str, Any] | None = None) -> Path:
    """Write a policy container."""
    header, params = policy.to_record()
    header["run_config"] = run_config or {}
    return write_container(path, "policy", header, params)


def load_policy(path: Path, env: EnvSpec | None = None) -> CorrectionPolicy:
    """Read a policy container, optionally checking it matches env."""
    header, params = read_container(path, "policy")
    policy = CorrectionPolicy.from_record(header, params)
    if env is not None and policy.env != env:
        raise CheckpointMismatchError(
            f"Policy was trained for {policy.env.name}, not {env.name}"
        )
    return policy
