"""
ReachDiff Sampling Commands

sample and schedule.
"""

import argparse
from pathlib import Path
from typing import Any

import numpy as np

from src.cli.common import (
    add_curriculum_flags,
    add_projection_flags,
    curriculum_from,
    emit,
    parse_vector,
    projector_from,
    resolve_settings,
)
from src.core.exceptions import EXIT_OK
from src.core.storage import write_csv
from src.models.diffusion import CurriculumMode, ReferenceSource
from src.models.projection import SolverConfig
from src.models.run_config import RunConfig
from src.models.trajectory import Trajectory
from src.services.correction_policy import load_policy
from src.services.datasets import save_trajectories
from src.services.diffusion import SELECTION_METRICS, best_index, load_checkpoint, sample
from src.services.dynamics import env_from_spec
from src.services.sampler import schedule_sigmas


def sample_cmd(args: argparse.Namespace) -> int:
    cfg = resolve_settings(args)
    checkpoint = load_checkpoint(args.checkpoint)
    env = env_from_spec(checkpoint.env)
    kind = projector_from(args, cfg)

    curriculum = None
    if args.curriculum is not None:
        curriculum = curriculum_from(CurriculumMode(args.curriculum), args, cfg)
    elif kind is not None and checkpoint.curriculum.never_projects:
        curriculum = curriculum_from(CurriculumMode.MID, args, cfg)
    policy = None if args.policy is None else load_policy(args.policy, env=env.spec)

    if args.s0 is not None:
        initial_states = parse_vector(args.s0, env.spec.n_states, "--s0")[None, :]
    else:
        initial_states = env.sample_initial_states(args.initial_states, np.random.default_rng(args.seed))

    trajectories: list[Trajectory] = []
    origins: list[int] = []
    fractions: list[list[float]] = []
    for k, s0 in enumerate(initial_states):
        result = sample(
            checkpoint,
            s0,
            batch=args.batch,
            seed=args.seed * 1_000_003 + k,
            projector=kind,
            curriculum=curriculum,
            reference=ReferenceSource(args.reference),
            policy=policy,
            use_projection=not args.no_projection,
            solver=SolverConfig.from_settings(cfg),
        )
        batch = result.trajectories
        if args.select is not None:
            batch = [batch[best_index(env, batch, args.select)]]
        trajectories.extend(batch)
        origins.extend([k] * len(batch))
        fractions.append(result.projection_fraction)

    run = RunConfig.resolve(
        "sample", cfg, env=env.name, seed=args.seed, inputs={"checkpoint": args.checkpoint}, out=args.out,
        batch=args.batch, projector=None if kind is None else kind.label, curriculum=args.curriculum,
        reference=args.reference, use_projection=not args.no_projection, select=args.select,
    )
    save_trajectories(
        args.out,
        env.spec,
        trajectories,
        metadata={"initial_state": origins, "projection_fraction": fractions},
        run_config=run.header(),
    )
    claimed = sum(1 for t in trajectories if t.admissible)
    emit(f"wrote {len(trajectories)} trajectories to {args.out} ({claimed} admissible by construction)")
    return EXIT_OK


def schedule_cmd(args: argparse.Namespace) -> int:
    """Print the noise ladder with the curriculum's skip probability per level."""
    cfg = resolve_settings(args, schedule_steps=args.N)
    sigmas = schedule_sigmas(cfg.schedule_steps, cfg.sigma_first, cfg.sigma_last, cfg.rho)
    curriculum = curriculum_from(CurriculumMode(args.curriculum), args, cfg)
    rows = [(i, float(s), curriculum.skip_probability(float(s))) for i, s in enumerate(sigmas)]
    emit("i\tsigma\tskip_probability")
    for i, sigma, p in rows:
        emit(f"{i}\t{sigma!r}\t{p!r}")
    if args.out is not None:
        write_csv(args.out, ("i", "sigma", "skip_probability"), rows)
    return EXIT_OK


def register(subparsers: Any, parent: argparse.ArgumentParser) -> None:
    p = subparsers.add_parser("sample", parents=[parent], help="Sample trajectories from a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint file")
    p.add_argument("--s0", help="Initial state as comma-separated floats")
    p.add_argument("--initial-states", type=int, default=1, help="Initial states drawn from S_0 when --s0 is absent")
    p.add_argument("--batch", type=int, default=8, help="Samples per initial state (default: 8)")
    p.add_argument("--reference", choices=[r.value for r in ReferenceSource], default=ReferenceSource.SAMPLE.value,
                   help="Pref reference at inference")
    p.add_argument("--no-projection", action="store_true", help="Disable projection entirely")
    p.add_argument("--policy", type=Path, help="Correction policy override for PSA")
    p.add_argument("--select", choices=list(SELECTION_METRICS), help="Keep only the best sample per initial state")
    p.add_argument("--out", type=Path, required=True, help="Trajectories file to write")
    add_projection_flags(p)
    add_curriculum_flags(p)
    p.set_defaults(handler=sample_cmd)

    p = subparsers.add_parser("schedule", parents=[parent], help="Print the noise ladder and curriculum table")
    p.add_argument("--N", type=int, help="Number of sampling steps")
    p.add_argument("--curriculum", choices=[m.value for m in CurriculumMode], default=CurriculumMode.MID.value)
    p.add_argument("--sigma-min", type=float, help="Curriculum lower bound")
    p.add_argument("--sigma-max", type=float, help="Curriculum upper bound")
    p.add_argument("--out", type=Path, help="Also write the table as CSV")
    p.set_defaults(handler=schedule_cmd)
