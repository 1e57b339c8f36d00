"""
ReachDiff Training Commands

train and train-policy.
"""

import argparse
from pathlib import Path
from typing import Any

import structlog

from src.cli.common import (
    add_curriculum_flags,
    add_projection_flags,
    curriculum_from,
    emit,
    projector_from,
    resolve_settings,
)
from src.core.exceptions import EXIT_OK, TrainingDivergedError
from src.models.diffusion import CurriculumMode, Modality, NoiseSchedule, TrainingConfig
from src.models.policy import PolicyConfig
from src.models.projection import ProjectorTag, SolverConfig
from src.models.run_config import RunConfig
from src.services.correction_policy import load_policy, save_policy, train_correction_policy
from src.services.datasets import load_dataset
from src.services.diffusion import Trainer, save_checkpoint, write_loss_trace
from src.services.dynamics import env_from_spec

logger = structlog.get_logger(__name__)


def train(args: argparse.Namespace) -> int:
    cfg = resolve_settings(args, train_steps=args.steps, batch_size=args.batch, schedule_steps=args.N)
    dataset = load_dataset(args.dataset)
    env = env_from_spec(dataset.env)
    kind = projector_from(args, cfg)
    if args.curriculum is not None:
        mode = CurriculumMode(args.curriculum)
    else:
        mode = CurriculumMode.MID if kind is not None else CurriculumMode.OFF
    curriculum = curriculum_from(mode, args, cfg)

    policy = None
    if kind is not None and kind.tag == ProjectorTag.PSA:
        if args.policy is not None:
            policy = load_policy(args.policy, env=env.spec)
        else:
            policy = train_correction_policy(env, dataset, PolicyConfig.from_settings(cfg, seed=args.seed))

    run = RunConfig.resolve(
        "train", cfg, env=env.name, seed=args.seed, inputs={"dataset": args.dataset}, out=args.out,
        modality=args.modality, projector=None if kind is None else kind.label, curriculum=mode.value,
    )
    trainer = Trainer(
        env,
        dataset,
        Modality(args.modality),
        config=TrainingConfig.from_settings(cfg, seed=args.seed),
        schedule=NoiseSchedule.from_settings(cfg),
        projector=kind,
        curriculum=curriculum,
        policy=policy,
        solver=SolverConfig.from_settings(cfg),
    )
    try:
        checkpoint = trainer.train()
    except TrainingDivergedError as e:
        if e.checkpoint is not None:
            rescue = args.out.with_name(args.out.name + ".last-good")
            save_checkpoint(rescue, e.checkpoint, run_config=run.header())
            logger.error("Last good checkpoint saved", path=str(rescue))
        raise

    save_checkpoint(args.out, checkpoint, run_config=run.header())
    trace_path = args.loss_trace or args.out.with_suffix(".loss.csv")
    write_loss_trace(trace_path, checkpoint)
    emit(f"wrote checkpoint {args.out} (final loss {checkpoint.metadata.get('final_loss')})")
    return EXIT_OK


def train_policy(args: argparse.Namespace) -> int:
    cfg = resolve_settings(args, policy_steps=args.steps, policy_batch_size=args.batch)
    dataset = load_dataset(args.dataset)
    env = env_from_spec(dataset.env)
    policy = train_correction_policy(env, dataset, PolicyConfig.from_settings(cfg, seed=args.seed))
    run = RunConfig.resolve(
        "train-policy", cfg, env=env.name, seed=args.seed, inputs={"dataset": args.dataset}, out=args.out,
    )
    save_policy(args.out, policy, run_config=run.header())
    emit(f"wrote correction policy {args.out} (eval loss {policy.final_loss})")
    return EXIT_OK


def register(subparsers: Any, parent: argparse.ArgumentParser) -> None:
    p = subparsers.add_parser("train", parents=[parent], help="Train a diffusion denoiser")
    p.add_argument("--dataset", type=Path, required=True, help="Dataset file")
    p.add_argument("--modality", choices=[m.value for m in Modality], default=Modality.SA.value)
    p.add_argument("--steps", type=int, help="Optimizer steps")
    p.add_argument("--batch", type=int, help="Batch size")
    p.add_argument("--N", type=int, help="Sampling steps stored in the checkpoint's noise schedule")
    p.add_argument("--policy", type=Path, help="Correction policy for PSA (trained on the fly if absent)")
    p.add_argument("--out", type=Path, required=True, help="Checkpoint file to write")
    p.add_argument("--loss-trace", type=Path, help="Loss trace CSV (default: next to the checkpoint)")
    add_projection_flags(p)
    add_curriculum_flags(p)
    p.set_defaults(handler=train)

    p = subparsers.add_parser("train-policy", parents=[parent], help="Train a correction policy for PSA")
    p.add_argument("--dataset", type=Path, required=True, help="Dataset file with actions")
    p.add_argument("--steps", type=int, help="Optimizer steps")
    p.add_argument("--batch", type=int, help="Batch size")
    p.add_argument("--out", type=Path, required=True, help="Policy file to write")
    p.set_defaults(handler=train_policy)
