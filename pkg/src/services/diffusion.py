"""
ReachDiff Diffusion Service

Training with curriculum-gated projections, checkpoint storage,
first-order deterministic sampling and best-sample selection.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import structlog
import torch
from torch import nn

from src.core.exceptions import (
    CheckpointMismatchError,
    ConfigurationError,
    RejectedInputError,
    TrainingDivergedError,
)
from src.core.storage import read_container, write_container, write_csv
from src.models.diffusion import (
    Curriculum,
    CurriculumMode,
    Modality,
    NoiseSchedule,
    ReferenceSource,
    TrainingConfig,
)
from src.models.environment import EnvSpec
from src.models.projection import ProjectorKind, ProjectorTag, SolverConfig
from src.models.trajectory import Dataset, NormalizationStats, Trajectory
from src.services.correction_policy import CorrectionPolicy
from src.services.denoiser import Denoiser, TrajectoryLayout
from src.services.dynamics import Environment, env_from_spec
from src.services.projection import project_trajectory
from src.services.sampler import curriculum_gate, denoise_step, schedule_from

logger = structlog.get_logger(__name__)

LOSS_TRACE_COLUMNS = ("step", "loss", "sigma_mean", "projection_fraction")
EVAL_BATCH = 64


def check_compatible(modality: Modality, kind: ProjectorKind | None) -> None:
    """Reject projectors that need actions on a state-only model."""
    if kind is None:
        return
    if modality == Modality.S and kind.needs_actions:
        raise ConfigurationError(
            f"Projector {kind.label} needs predicted actions; use modality SA or A"
        )


# ═════════════════════════════════════════════════════════════════════════
# Checkpoint
# ═════════════════════════════════════════════════════════════════════════

@dataclass(eq=False)
class Checkpoint:
    """Trained denoiser with everything needed to sample from it."""
    env: EnvSpec
    modality: Modality
    schedule: NoiseSchedule
    curriculum: Curriculum
    projector: ProjectorKind | None
    training: TrainingConfig
    stats: NormalizationStats
    parameters: np.ndarray
    loss_trace: list[tuple[int, float, float, float]] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)
    policy: CorrectionPolicy | None = None

    @property
    def layout(self) -> TrajectoryLayout:
        return TrajectoryLayout(self.env, self.modality, self.stats)

    def build_network(self) -> Denoiser:
        layout = self.layout
        network = Denoiser(
            layout.channels,
            layout.context_dim,
            width=self.training.width,
            kernel=self.training.kernel,
            embed_dim=self.training.embed_dim,
        )
        expected = sum(p.numel() for p in network.parameters())
        if self.parameters.size != expected:
            raise CheckpointMismatchError(
                f"Checkpoint holds {self.parameters.size} parameters, network needs {expected}"
            )
        nn.utils.vector_to_parameters(torch.from_numpy(self.parameters.copy()), network.parameters())
        return network.eval()


def save_checkpoint(path: Path, checkpoint: Checkpoint, run_config: dict[str, Any] | None = None) -> Path:
    """Write a checkpoint container; an attached correction policy follows the denoiser parameters."""
    header: dict[str, Any] = {
        "env": checkpoint.env.model_dump(mode="json"),
        "modality": checkpoint.modality.value,
        "schedule": checkpoint.schedule.model_dump(mode="json"),
        "curriculum": checkpoint.curriculum.model_dump(mode="json"),
        "projector": None if checkpoint.projector is None else checkpoint.projector.model_dump(mode="json"),
        "training": checkpoint.training.model_dump(mode="json"),
        "stats": checkpoint.stats.model_dump(mode="json"),
        "loss_trace": [list(row) for row in checkpoint.loss_trace],
        "metadata": checkpoint.metadata,
        "denoiser_count": int(checkpoint.parameters.size),
        "policy": None,
        "run_config": run_config or {},
    }
    payload = [checkpoint.parameters]
    if checkpoint.policy is not None:
        policy_header, policy_params = checkpoint.policy.to_record()
        header["policy"] = policy_header
        payload.append(policy_params)
    return write_container(path, "checkpoint", header, np.concatenate(payload))


def load_checkpoint(path: Path, env: EnvSpec | None = None) -> Checkpoint:
    """
    Read a checkpoint container.

    Raises:
        CheckpointMismatchError: the checkpoint was trained on another env
    """
    header, payload = read_container(path, "checkpoint")
    stored_env = EnvSpec.model_validate(header["env"])
    if env is not None and stored_env != env:
        raise CheckpointMismatchError(
            f"Checkpoint was trained for {stored_env.name} (H={stored_env.horizon}), "
            f"not {env.name} (H={env.horizon})"
        )
    count = int(header["denoiser_count"])
    policy = None
    if header.get("policy") is not None:
        policy = CorrectionPolicy.from_record(header["policy"], payload[count:])
    projector = header.get("projector")
    return Checkpoint(
        env=stored_env,
        modality=Modality(header["modality"]),
        schedule=NoiseSchedule.model_validate(header["schedule"]),
        curriculum=Curriculum.model_validate(header["curriculum"]),
        projector=None if projector is None else ProjectorKind.model_validate(projector),
        training=TrainingConfig.model_validate(header["training"]),
        stats=NormalizationStats.model_validate(header["stats"]),
        parameters=payload[:count].copy(),
        loss_trace=[(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in header["loss_trace"]],
        metadata=header.get("metadata", {}),
        policy=policy,
    )


def write_loss_trace(path: Path, checkpoint: Checkpoint) -> Path:
    """Loss trace as CSV (step, loss, sigma_mean, projection_fraction)."""
    return write_csv(path, LOSS_TRACE_COLUMNS, checkpoint.loss_trace)


# ═════════════════════════════════════════════════════════════════════════
# Training
# ═════════════════════════════════════════════════════════════════════════

class Trainer:
    """
    Denoiser training loop.

    Each step samples ln σ ~ N(p_mean, p_std²), noises a batch of
    normalized dataset trajectories, denoises them and, when a projector
    is configured, replaces the denoised estimate by its projection
    (gated per transition by the curriculum) with a straight-through
    gradient. The loss is the mean squared error to the clean batch.
    """

    def __init__(
        self,
        env: Environment,
        dataset: Dataset,
        modality: Modality,
        config: TrainingConfig | None = None,
        schedule: NoiseSchedule | None = None,
        projector: ProjectorKind | None = None,
        curriculum: Curriculum | None = None,
        policy: CorrectionPolicy | None = None,
        solver: SolverConfig | None = None,
    ):
        self.env = env
        self.dataset = dataset
        self.modality = modality
        self.config = config or TrainingConfig()
        self.schedule = schedule or NoiseSchedule()
        self.projector = projector
        self.curriculum = curriculum or Curriculum.from_mode(CurriculumMode.OFF)
        self.policy = policy
        self.solver = solver or SolverConfig()
        self.logger = logger.bind(service="Trainer", env=env.name, modality=modality.value)

        if dataset.env != env.spec:
            raise CheckpointMismatchError(
                f"Dataset env {dataset.env.name} does not match {env.name}"
            )
        if len(dataset) == 0:
            raise ConfigurationError("Training requires a non-empty dataset")
        self.layout = TrajectoryLayout(env.spec, modality, dataset.stats)
        if self.layout.needs_actions and not dataset.has_actions:
            raise ConfigurationError(f"Modality {modality.value} requires a dataset with actions")
        check_compatible(modality, projector)
        if projector is not None and projector.tag == ProjectorTag.PSA and policy is None:
            raise ConfigurationError("Projector PSA requires a correction policy")

        self.clean = np.stack([self.layout.encode(t) for t in dataset.trajectories])
        self.contexts = np.stack(
            [self.layout.context(t.states[0]) for t in dataset.trajectories]
        ).reshape(len(dataset), self.layout.context_dim)

    @property
    def projects(self) -> bool:
        # action-only outputs are rollouts, projection leaves them unchanged
        return (
            self.projector is not None
            and self.modality != Modality.A
            and not self.curriculum.never_projects
        )

    def _project_batch(
        self, denoised: np.ndarray, indices: np.ndarray, sigmas: np.ndarray, rng: np.random.Generator
    ) -> tuple[np.ndarray, float]:
        """Projected copies of the denoised batch and the fraction of projected transitions."""
        assert self.projector is not None
        out = denoised.copy()
        projected = 0
        H = self.env.spec.horizon
        for b, idx in enumerate(indices):
            gate = curriculum_gate(self.curriculum, float(sigmas[b]), H, rng)
            if not gate.any():
                continue
            reference = self.dataset.trajectories[idx]
            predicted = self.layout.decode(denoised[b], reference.states[0])
            result = project_trajectory(
                self.env, predicted, self.projector, reference=reference, gate=gate,
                policy=self.policy, solver=self.solver,
            )
            out[b] = self.layout.encode(result.trajectory)
            projected += int(gate.sum())
        return out, projected / (len(indices) * H)

    def train(self) -> Checkpoint:
        """
        Run the configured number of optimizer steps.

        Raises:
            TrainingDivergedError: non-finite loss; carries the last good checkpoint
        """
        cfg = self.config
        torch.manual_seed(cfg.seed)
        generator = torch.Generator().manual_seed(cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        network = Denoiser(
            self.layout.channels,
            self.layout.context_dim,
            width=cfg.width,
            kernel=cfg.kernel,
            embed_dim=cfg.embed_dim,
        )
        optimizer = torch.optim.Adam(network.parameters(), lr=cfg.learning_rate)

        clean = torch.from_numpy(self.clean)
        contexts = torch.from_numpy(self.contexts)
        n = clean.shape[0]
        eval_idx = torch.arange(min(n, EVAL_BATCH))
        eval_gen = torch.Generator().manual_seed(cfg.seed + 1)
        eval_sigma = torch.exp(
            self.schedule.p_mean + self.schedule.p_std * torch.randn(len(eval_idx), generator=eval_gen, dtype=torch.float64)
        )
        eval_noise = torch.randn(clean[eval_idx].shape, generator=eval_gen, dtype=torch.float64) * eval_sigma[:, None, None]

        def eval_loss() -> float:
            with torch.no_grad():
                pred = network(clean[eval_idx] + eval_noise, eval_sigma, contexts[eval_idx])
                return float(((pred - clean[eval_idx]) ** 2).mean())

        initial_eval = eval_loss()
        trace: list[tuple[int, float, float, float]] = []
        last_good = self._snapshot(network, trace, {"steps": 0, "eval_loss_initial": initial_eval})

        for step in range(1, cfg.steps + 1):
            network.train()
            indices = rng.integers(0, n, size=min(cfg.batch_size, n))
            batch_idx = torch.from_numpy(indices)
            x0 = clean[batch_idx]
            sigma = torch.exp(
                self.schedule.p_mean
                + self.schedule.p_std * torch.randn(len(indices), generator=generator, dtype=torch.float64)
            )
            noise = torch.randn(x0.shape, generator=generator, dtype=torch.float64) * sigma[:, None, None]
            denoised = network(x0 + noise, sigma, contexts[batch_idx])

            fraction = 0.0
            if self.projects:
                projected, fraction = self._project_batch(
                    denoised.detach().numpy(), indices, sigma.numpy(), rng
                )
                # straight-through: value of the projection, gradient of the denoiser
                denoised = denoised + (torch.from_numpy(projected) - denoised).detach()

            loss = ((denoised - x0) ** 2).mean()
            if not torch.isfinite(loss):
                self.logger.error("Training diverged", step=step)
                raise TrainingDivergedError(
                    f"Non-finite loss at step {step}", checkpoint=last_good, step=step
                )
            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(network.parameters(), cfg.grad_clip)
            optimizer.step()

            trace.append((step, float(loss), float(sigma.mean()), fraction))
            if step % cfg.log_every == 0 or step == cfg.steps:
                last_good = self._snapshot(network, trace, {"steps": step, "eval_loss_initial": initial_eval})
                self.logger.info("Training step", step=step, loss=float(loss), projection_fraction=fraction)

        network.eval()
        final_eval = eval_loss()
        metadata = {
            "steps": cfg.steps,
            "seed": cfg.seed,
            "final_loss": trace[-1][1] if trace else None,
            "eval_loss_initial": initial_eval,
            "eval_loss_final": final_eval,
            "n_trajectories": n,
        }
        self.logger.info("Training finished", eval_loss_initial=initial_eval, eval_loss_final=final_eval)
        return self._snapshot(network, trace, metadata)

    def _snapshot(
        self, network: Denoiser, trace: list[tuple[int, float, float, float]], metadata: dict[str, Any]
    ) -> Checkpoint:
        params = nn.utils.parameters_to_vector(network.parameters()).detach().numpy().copy()
        return Checkpoint(
            env=self.env.spec,
            modality=self.modality,
            schedule=self.schedule,
            curriculum=self.curriculum,
            projector=self.projector,
            training=self.config,
            stats=self.dataset.stats,
            parameters=params,
            loss_trace=list(trace),
            metadata=dict(metadata),
            policy=self.policy,
        )


# ═════════════════════════════════════════════════════════════════════════
# Sampling
# ═════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class SampleResult:
    """Sampled trajectories with the projection fraction of each iteration."""
    trajectories: list[Trajectory]
    projection_fraction: list[float]


def sample(
    checkpoint: Checkpoint,
    s0: np.ndarray,
    batch: int = 1,
    seed: int = 0,
    projector: ProjectorKind | None = None,
    curriculum: Curriculum | None = None,
    reference: ReferenceSource = ReferenceSource.SAMPLE,
    policy: CorrectionPolicy | None = None,
    use_projection: bool = True,
    solver: SolverConfig | None = None,
) -> SampleResult:
    """
    Draw trajectories from s0 with the first-order deterministic sampler.

    The initial-state token is pinned to s0 after every step, then each
    trajectory is projected with gates drawn from the curriculum at the
    step's noise level.

    Args:
        checkpoint: Trained checkpoint
        s0: Initial state
        batch: Number of samples
        seed: Seed for the initial noise and the curriculum gates
        projector: Projector override (default: the checkpoint's)
        curriculum: Curriculum override (default: the checkpoint's)
        reference: Pref reference source
        policy: Correction policy override for PSA
        use_projection: False disables projection entirely
        solver: Hull-projection caps

    Returns:
        SampleResult; action-backed projections and A-modality samples are
        flagged admissible
    """
    env_spec = checkpoint.env
    env = env_from_spec(env_spec)
    s0 = np.asarray(s0, dtype=np.float64).reshape(-1)
    if s0.shape[0] != env_spec.n_states or not np.all(np.isfinite(s0)):
        raise RejectedInputError(f"s0 must be a finite vector of {env_spec.n_states} components")
    if batch < 1:
        raise RejectedInputError("batch must be at least 1")

    kind = projector if projector is not None else checkpoint.projector
    curr = curriculum if curriculum is not None else checkpoint.curriculum
    policy = policy if policy is not None else checkpoint.policy
    active = use_projection and kind is not None and checkpoint.modality != Modality.A and not curr.never_projects
    if active:
        assert kind is not None
        check_compatible(checkpoint.modality, kind)
        if kind.tag == ProjectorTag.PSA and policy is None:
            raise ConfigurationError("Projector PSA requires a correction policy")

    layout = checkpoint.layout
    network = checkpoint.build_network()
    context = torch.from_numpy(np.tile(layout.context(s0), (batch, 1)).reshape(batch, layout.context_dim))
    sigmas = schedule_from(checkpoint.schedule)
    generator = torch.Generator().manual_seed(seed)
    rng = np.random.default_rng(seed)
    H = env_spec.horizon

    def denoise_fn(tau: np.ndarray, sigma: float) -> np.ndarray:
        with torch.no_grad():
            sig = torch.full((tau.shape[0],), sigma, dtype=torch.float64)
            return network(torch.from_numpy(tau), sig, context).numpy()

    tau = torch.randn((batch, layout.length, layout.channels), generator=generator, dtype=torch.float64).numpy()
    tau = layout.pin(tau * sigmas[0], s0)
    final_raw: list[Trajectory | None] = [None] * batch
    fractions: list[float] = []
    n_steps = len(sigmas) - 1

    for i in range(n_steps):
        tau, denoised = denoise_step(denoise_fn, tau, float(sigmas[i]), float(sigmas[i + 1]))
        layout.pin(tau, s0)
        projected = 0
        if active:
            assert kind is not None
            for b in range(batch):
                gate = curriculum_gate(curr, float(sigmas[i]), H, rng)
                if not gate.any():
                    final_raw[b] = None
                    continue
                predicted = layout.decode(tau[b], s0)
                ref_source = tau[b] if reference == ReferenceSource.SAMPLE else denoised[b]
                ref_traj = layout.decode(ref_source, s0) if kind.needs_reference else None
                result = project_trajectory(
                    env, predicted, kind, reference=ref_traj, gate=gate, policy=policy, solver=solver
                )
                tau[b] = layout.encode(result.trajectory)
                final_raw[b] = result.trajectory if i == n_steps - 1 else None
                projected += int(gate.sum())
        fractions.append(projected / (batch * H))

    trajectories = [
        raw if raw is not None else layout.decode(tau[b], s0)
        for b, raw in enumerate(final_raw)
    ]
    logger.info(
        "Sampling finished",
        env=env_spec.name,
        batch=batch,
        projector=None if not active or kind is None else kind.label,
        curriculum=curr.mode.value,
    )
    return SampleResult(trajectories=trajectories, projection_fraction=fractions)


# ═════════════════════════════════════════════════════════════════════════
# Selection
# ═════════════════════════════════════════════════════════════════════════

SELECTION_METRICS: dict[str, Callable[[Environment, Trajectory], float]] = {
    "survival": lambda env, traj: float(env.survival_steps(traj.states)),
    "reward": lambda env, traj: env.reward_proxy(traj.states),
    "task-completion": lambda env, traj: float(env.task_completed(traj.states)),
}


def best_index(env: Environment, trajectories: Sequence[Trajectory], metric: str = "survival") -> int:
    """Index of the best trajectory under a named metric; ties go to the lowest index."""
    if metric not in SELECTION_METRICS:
        raise ConfigurationError(
            f"Unknown selection metric {metric!r}; valid: {', '.join(SELECTION_METRICS)}"
        )
    if not trajectories:
        raise RejectedInputError("selection needs at least one trajectory")
    score = SELECTION_METRICS[metric]
    return int(np.argmax([score(env, t) for t in trajectories]))


def select_best(env: Environment, trajectories: Sequence[Trajectory], metric: str = "survival") -> Trajectory:
    """Best trajectory of a batch under a named metric."""
    return trajectories[best_index(env, trajectories, metric)]
