"""
ReachDiff Evaluation Service

Runs experiment plans: samples every model from shared initial states,
scores each sample (SAE/CAE through inverse dynamics, survival, reward
proxy, task completion) and writes a report bundle:

    plan.json          plan echo
    samples.csv        one row per sample
    metrics.csv        mean/std per (model, metric)
    selected.csv       best sample per (model, seed, initial state)
    trajectories/      sampled trajectory containers, one per cell
    plots/             SVG distributions and violation curves
"""

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import structlog  # noqa: E402

from src.config import Settings, settings  # noqa: E402
from src.core.exceptions import CheckpointMismatchError, ConfigurationError  # noqa: E402
from src.core.storage import atomic_write_bytes, write_csv, write_json  # noqa: E402
from src.models.diffusion import Curriculum  # noqa: E402
from src.models.experiment import ExperimentPlan, Metric, ModelConfig  # noqa: E402
from src.models.inverse import IDConfig  # noqa: E402
from src.models.projection import SolverConfig  # noqa: E402
from src.services.datasets import save_trajectories  # noqa: E402
from src.services.diffusion import Checkpoint, best_index, load_checkpoint, sample  # noqa: E402
from src.services.dynamics import Environment, env_from_spec, get_environment  # noqa: E402
from src.services.inverse_dynamics import id_trajectory  # noqa: E402

logger = structlog.get_logger(__name__)

SAMPLE_COLUMNS = (
    "model", "seed", "initial_state", "sample",
    "sae_mean", "cae", "survival_fraction", "reward_proxy", "task_completion",
    "id_not_converged", "admissible_claim", "trajectory_file",
)
METRIC_COLUMNS = ("model", "metric", "mean", "std", "n")
SELECTED_COLUMNS = ("model", "seed", "initial_state", "best_sample", "metric", "value")

_METRIC_FIELD = {
    Metric.SAE: "sae_mean",
    Metric.CAE: "cae",
    Metric.SURVIVAL: "survival_fraction",
    Metric.REWARD: "reward_proxy",
    Metric.TASK_COMPLETION: "task_completion",
}
_SELECTION_FIELD = {
    "survival": "survival_fraction",
    "reward": "reward_proxy",
    "task-completion": "task_completion",
}

SVG_HASH_SALT = "reachdiff"


@dataclass(frozen=True)
class Cell:
    model: ModelConfig
    seed: int
    initial_index: int
    initial_state: tuple[float, ...]

    @property
    def sample_seed(self) -> int:
        return self.seed * 1_000_003 + self.initial_index

    @property
    def file_name(self) -> str:
        return f"{self.model.name}__seed{self.seed}__init{self.initial_index}.rdtr"


@dataclass(eq=False)
class ReportBundle:
    """In-memory view of a written report."""
    out_dir: Path
    rows: list[dict[str, Any]]
    aggregates: list[dict[str, Any]]
    selected: list[dict[str, Any]]
    violation_curves: dict[str, np.ndarray]


def _load_models(plan: ExperimentPlan, env: Environment) -> dict[str, Checkpoint]:
    checkpoints: dict[str, Checkpoint] = {}
    for model in plan.models:
        if not model.checkpoint.is_file():
            raise ConfigurationError(
                f"Checkpoint for model {model.name!r} not found: {model.checkpoint}"
            )
        checkpoint = load_checkpoint(model.checkpoint)
        if checkpoint.env.name != env.name:
            raise CheckpointMismatchError(
                f"Model {model.name!r} was trained for {checkpoint.env.name}, plan env is {env.name}"
            )
        checkpoints[model.name] = checkpoint
    return checkpoints


def _run_cell(
    plan: ExperimentPlan, cell: Cell, checkpoint: Checkpoint, traj_dir: Path, cfg: Settings
) -> tuple[list[dict[str, Any]], dict[str, Any], np.ndarray]:
    env = env_from_spec(checkpoint.env)
    model = cell.model
    curriculum = None if model.curriculum is None else Curriculum.from_mode(model.curriculum)
    result = sample(
        checkpoint,
        np.asarray(cell.initial_state),
        batch=plan.samples_per_state,
        seed=cell.sample_seed,
        projector=model.projector,
        curriculum=curriculum,
        reference=model.reference,
        use_projection=model.use_projection,
        solver=SolverConfig.from_settings(cfg),
    )
    save_trajectories(
        traj_dir / cell.file_name,
        checkpoint.env,
        result.trajectories,
        metadata={"model": model.name, "seed": cell.seed, "initial_state": cell.initial_index},
    )
    wants_id = Metric.SAE in plan.metrics or Metric.CAE in plan.metrics
    id_cfg = IDConfig.from_settings(cfg, method=plan.id_method, seed=cell.sample_seed)
    H = env.spec.horizon
    rows: list[dict[str, Any]] = []
    alive = np.zeros(H + 1)
    for k, traj in enumerate(result.trajectories):
        sae_mean = cae = float("nan")
        not_converged = 0
        if wants_id:
            report = id_trajectory(env, traj, id_cfg)
            sae_mean, cae, not_converged = report.mean_sae, report.cae, report.not_converged
        survival = env.survival_steps(traj.states)
        alive[: survival + 1] += 1
        rows.append({
            "model": model.name,
            "seed": cell.seed,
            "initial_state": cell.initial_index,
            "sample": k,
            "sae_mean": sae_mean,
            "cae": cae,
            "survival_fraction": survival / H,
            "reward_proxy": env.reward_proxy(traj.states),
            "task_completion": float(env.task_completed(traj.states)),
            "id_not_converged": not_converged,
            "admissible_claim": traj.admissible,
            "trajectory_file": f"trajectories/{cell.file_name}",
        })
    best = best_index(env, result.trajectories, plan.selection_metric)
    selected = {
        "model": model.name,
        "seed": cell.seed,
        "initial_state": cell.initial_index,
        "best_sample": best,
        "metric": plan.selection_metric,
        "value": rows[best][_SELECTION_FIELD[plan.selection_metric]],
    }
    return rows, selected, alive


def aggregate(rows: list[dict[str, Any]], plan: ExperimentPlan) -> list[dict[str, Any]]:
    """Mean and population std of each metric per model."""
    out = []
    for model in plan.models:
        model_rows = [r for r in rows if r["model"] == model.name]
        for metric in plan.metrics:
            values = np.asarray([r[_METRIC_FIELD[metric]] for r in model_rows], dtype=np.float64)
            out.append({
                "model": model.name,
                "metric": metric.value,
                "mean": float(values.mean()) if values.size else float("nan"),
                "std": float(values.std()) if values.size else float("nan"),
                "n": int(values.size),
            })
    return out


# ═════════════════════════════════════════════════════════════════════════
# Plots
# ═════════════════════════════════════════════════════════════════════════

def _save_svg(fig: Any, path: Path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def plot_error_distributions(path: Path, rows: list[dict[str, Any]], field_name: str, label: str) -> None:
    """Histogram of log10 errors per model."""
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for model in dict.fromkeys(r["model"] for r in rows):
            values = np.asarray([r[field_name] for r in rows if r["model"] == model], dtype=np.float64)
            values = values[np.isfinite(values)]
            if values.size:
                ax.hist(np.log10(np.maximum(values, 1e-18)), bins=30, alpha=0.5, label=model)
        ax.set_xlabel(f"log10 {label}")
        ax.set_ylabel("samples")
        ax.legend()
        _save_svg(fig, path)


def plot_violation_curves(path: Path, curves: dict[str, np.ndarray]) -> None:
    """Fraction of samples that have violated a state constraint by each step."""
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for model, curve in curves.items():
            ax.plot(np.arange(curve.size), curve, label=model)
        ax.set_xlabel("time step")
        ax.set_ylabel("violation ratio")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
        _save_svg(fig, path)


# ═════════════════════════════════════════════════════════════════════════
# Runner
# ═════════════════════════════════════════════════════════════════════════

def run_experiment(
    plan: ExperimentPlan,
    out_dir: Path,
    workers: int | None = None,
    run_config: dict[str, Any] | None = None,
    cfg: Settings | None = None,
) -> ReportBundle:
    """
    Execute a plan and write its report bundle.

    Args:
        plan: Experiment plan
        out_dir: Report directory
        workers: Concurrent cells (default from settings)
        run_config: Resolved configuration echoed into plan.json
        cfg: Settings (default: process settings)

    Returns:
        ReportBundle
    """
    cfg = cfg or settings
    workers = workers or cfg.eval_workers
    log = logger.bind(service="Evaluation", env=plan.env)
    env = get_environment(plan.env)
    checkpoints = _load_models(plan, env)
    out_dir = Path(out_dir)
    traj_dir = out_dir / "trajectories"

    start_rng = np.random.default_rng(plan.seeds[0])
    initial_states = env.sample_initial_states(plan.n_initial_states, start_rng)
    cells = [
        Cell(model, seed, k, tuple(float(v) for v in s0))
        for model in plan.models
        for seed in plan.seeds
        for k, s0 in enumerate(initial_states)
    ]
    log.info("Experiment started", cells=len(cells), workers=workers)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(
            lambda cell: _run_cell(plan, cell, checkpoints[cell.model.name], traj_dir, cfg), cells
        ))

    rows = [row for cell_rows, _, _ in results for row in cell_rows]
    selected = [sel for _, sel, _ in results]
    curves: dict[str, np.ndarray] = {}
    for cell, (cell_rows, _, alive) in zip(cells, results, strict=True):
        curves.setdefault(cell.model.name, np.zeros_like(alive))
        curves[cell.model.name] = curves[cell.model.name] + alive
    per_model = plan.samples_per_state * plan.n_initial_states * len(plan.seeds)
    violation = {name: 1.0 - alive / per_model for name, alive in curves.items()}
    aggregates = aggregate(rows, plan)

    write_json(out_dir / "plan.json", {
        "plan": plan.model_dump(mode="json"),
        "initial_states": initial_states.tolist(),
        "run_config": run_config or {},
    })
    write_csv(out_dir / "samples.csv", SAMPLE_COLUMNS, ([r[c] for c in SAMPLE_COLUMNS] for r in rows))
    write_csv(out_dir / "metrics.csv", METRIC_COLUMNS, ([a[c] for c in METRIC_COLUMNS] for a in aggregates))
    write_csv(out_dir / "selected.csv", SELECTED_COLUMNS, ([s[c] for c in SELECTED_COLUMNS] for s in selected))

    plots = out_dir / "plots"
    if Metric.SAE in plan.metrics:
        plot_error_distributions(plots / "sae.svg", rows, "sae_mean", "SAE")
    if Metric.CAE in plan.metrics:
        plot_error_distributions(plots / "cae.svg", rows, "cae", "CAE")
    plot_violation_curves(plots / "violation.svg", violation)

    log.info("Experiment finished", out=str(out_dir), samples=len(rows))
    return ReportBundle(
        out_dir=out_dir,
        rows=rows,
        aggregates=aggregates,
        selected=selected,
        violation_curves=violation,
    )
