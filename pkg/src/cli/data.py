"""
ReachDiff Data Commands

gen-data, verify and project.
"""

import argparse
from pathlib import Path
from typing import Any

import orjson
import structlog

from src.cli.common import add_env, add_projection_flags, emit, projector_from, resolve_settings
from src.config import Settings
from src.core.exceptions import EXIT_OK, ConfigurationError, DatasetIntegrityError
from src.core.storage import container_kind, write_jsonl
from src.models.environment import EnvSpec
from src.models.inverse import IDConfig, IDMethod
from src.models.projection import SolverConfig
from src.models.run_config import RunConfig
from src.models.trajectory import Trajectory
from src.services.controllers import CONTROLLER_NAMES, generate_dataset
from src.services.datasets import (
    export_jsonl,
    failing_claims,
    load_dataset,
    load_trajectories,
    save_dataset,
    save_trajectories,
)
from src.services.dynamics import env_from_spec, get_environment
from src.services.inverse_dynamics import id_trajectory
from src.services.projection import project_trajectory

logger = structlog.get_logger(__name__)


def read_any(path: Path) -> tuple[EnvSpec, list[Trajectory]]:
    """Trajectories from a dataset or trajectories container, without re-checks."""
    kind = container_kind(path)
    if kind == "dataset":
        dataset = load_dataset(path, verify=False)
        return dataset.env, dataset.trajectories
    if kind == "trajectories":
        env, trajectories, _ = load_trajectories(path)
        return env, trajectories
    raise ConfigurationError(f"{path} holds a {kind} artifact; expected a dataset or trajectories file")


# ═════════════════════════════════════════════════════════════════════════
# gen-data
# ═════════════════════════════════════════════════════════════════════════

def gen_data(args: argparse.Namespace) -> int:
    cfg = resolve_settings(args)
    env = get_environment(args.env, horizon=args.horizon)
    run = RunConfig.resolve(
        "gen-data", cfg, env=args.env, seed=args.seed, out=args.out,
        controller=args.controller, n_traj=args.n_traj, horizon=env.spec.horizon,
    )
    dataset = generate_dataset(env, args.controller, args.n_traj, args.seed)
    save_dataset(args.out, dataset, run_config=run.header())
    if args.jsonl is not None:
        export_jsonl(args.jsonl, dataset)
    emit(f"wrote {len(dataset)} trajectories to {args.out}")
    return EXIT_OK


# ═════════════════════════════════════════════════════════════════════════
# verify
# ═════════════════════════════════════════════════════════════════════════

def verify(args: argparse.Namespace) -> int:
    """Re-simulate admissibility claims; optional inverse-dynamics reports."""
    cfg = resolve_settings(args)
    env_spec, trajectories = read_any(args.input)
    bad = failing_claims(env_spec, trajectories)
    claims = sum(1 for t in trajectories if t.admissible)
    summary: dict[str, Any] = {
        "env": env_spec.name,
        "n_trajectories": len(trajectories),
        "claimed_admissible": claims,
        "failing": bad,
    }
    if args.id:
        summary["inverse_dynamics"] = _id_reports(args, cfg, env_spec, trajectories)
    emit(orjson.dumps(summary, option=orjson.OPT_SORT_KEYS).decode())
    if bad:
        raise DatasetIntegrityError(
            f"{len(bad)} of {claims} admissibility claims fail re-simulation", indices=bad
        )
    return EXIT_OK


def _id_reports(
    args: argparse.Namespace, cfg: Settings, env_spec: EnvSpec, trajectories: list[Trajectory]
) -> dict[str, Any]:
    env = env_from_spec(env_spec)
    id_cfg = IDConfig.from_settings(cfg, method=IDMethod(args.id_method), seed=args.seed)
    reports = [id_trajectory(env, traj, id_cfg) for traj in trajectories]
    if args.out is not None:
        write_jsonl(args.out, (
            {"index": i, **report.model_dump(mode="json")} for i, report in enumerate(reports)
        ))
    cae = [r.cae for r in reports]
    return {
        "method": id_cfg.method.value,
        "mean_cae": sum(cae) / len(cae) if cae else 0.0,
        "max_cae": max(cae, default=0.0),
        "not_converged": sum(r.not_converged for r in reports),
    }


# ═════════════════════════════════════════════════════════════════════════
# project
# ═════════════════════════════════════════════════════════════════════════

def project(args: argparse.Namespace) -> int:
    """Project stored trajectories and report per-step residuals."""
    cfg = resolve_settings(args)
    kind = projector_from(args, cfg)
    if kind is None:
        raise ConfigurationError("project requires --projector/--kind")
    env_spec, trajectories = read_any(args.input)
    env = env_from_spec(env_spec)
    references: list[Trajectory] = trajectories
    if args.reference is not None:
        ref_spec, references = read_any(args.reference)
        if ref_spec != env_spec or len(references) != len(trajectories):
            raise ConfigurationError("reference file must match the input env and trajectory count")

    solver = SolverConfig.from_settings(cfg)
    projected: list[Trajectory] = []
    for i, (traj, ref) in enumerate(zip(trajectories, references, strict=True)):
        result = project_trajectory(env, traj, kind, reference=ref, solver=solver)
        projected.append(result.trajectory)
        emit(orjson.dumps({
            "index": i,
            "residuals": result.residuals.tolist(),
            "total_residual": result.total_residual,
        }, option=orjson.OPT_SORT_KEYS).decode())

    if args.out is not None:
        run = RunConfig.resolve(
            "project", cfg, env=env_spec.name, seed=args.seed,
            inputs={"input": args.input}, out=args.out, projector=kind.label,
        )
        save_trajectories(
            args.out, env_spec, projected,
            metadata={"projector": kind.model_dump(mode="json")}, run_config=run.header(),
        )
    logger.info("Projection finished", env=env_spec.name, projector=kind.label, n=len(projected))
    return EXIT_OK


def register(subparsers: Any, parent: argparse.ArgumentParser) -> None:
    p = subparsers.add_parser("gen-data", parents=[parent], help="Generate an admissible demonstration dataset")
    add_env(p)
    p.add_argument("--controller", choices=CONTROLLER_NAMES, default="pd-waypoints", help="Demonstration controller")
    p.add_argument("--n-traj", type=int, default=100, help="Number of trajectories (default: 100)")
    p.add_argument("--horizon", type=int, help="Prediction horizon override")
    p.add_argument("--out", type=Path, required=True, help="Dataset file to write")
    p.add_argument("--jsonl", type=Path, help="Also write a JSON-lines inspection export")
    p.set_defaults(handler=gen_data)

    p = subparsers.add_parser("verify", parents=[parent], help="Re-simulate admissibility claims of a file")
    p.add_argument("--input", type=Path, required=True, help="Dataset or trajectories file")
    p.add_argument("--id", action="store_true", help="Also run inverse dynamics and report SAE/CAE")
    p.add_argument("--id-method", choices=[m.value for m in IDMethod], default=IDMethod.COMBINED.value)
    p.add_argument("--out", type=Path, help="JSON-lines file for per-trajectory inverse-dynamics reports")
    p.set_defaults(handler=verify)

    p = subparsers.add_parser("project", parents=[parent], help="Project stored trajectories onto reachable sets")
    p.add_argument("--input", type=Path, required=True, help="Dataset or trajectories file")
    p.add_argument("--reference", type=Path, help="Reference trajectories for Pref (default: the input)")
    p.add_argument("--out", type=Path, help="Trajectories file for the projected outputs")
    add_projection_flags(p)
    p.set_defaults(handler=project)
