"""
ReachDiff CLI Common

Parser class, shared flags and the helpers that turn parsed flags into
settings, projectors and curricula.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, NoReturn

import numpy as np

from src.config import Settings, load_settings
from src.core.exceptions import EXIT_USAGE, RejectedInputError
from src.models.diffusion import Curriculum, CurriculumMode
from src.models.projection import ProjectorKind, ProjectorTag
from src.services.dynamics import ENV_NAMES

PROJECTOR_CHOICES = [tag.value for tag in ProjectorTag]
CURRICULUM_CHOICES = [mode.value for mode in CurriculumMode]


class ReachDiffArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the usage status."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def common_parent() -> argparse.ArgumentParser:
    """Flags shared by every subcommand."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, help="TOML or JSON config file (below flags, above defaults)")
    parent.add_argument("--log-json", action="store_true", help="Render logs as JSON lines on stderr")
    parent.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    return parent


def add_env(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--env", choices=ENV_NAMES, required=required, help="Environment name")


def add_projection_flags(parser: argparse.ArgumentParser) -> None:
    """Projector selection and tuning knobs."""
    group = parser.add_argument_group("projection")
    group.add_argument("--projector", "--kind", dest="projector", choices=PROJECTOR_CHOICES, help="Projector")
    group.add_argument("--action-guided", action="store_true", help="Search a shrunk box around the predicted action")
    group.add_argument("--no-reduction", action="store_true", help="Project full states instead of actuated velocities")
    group.add_argument("--delta", type=float, help="Shrink fraction of the action box, in (0, 1)")
    group.add_argument("--lambda-ref", type=float, help="Reference trade-off coefficient (Pref)")


def add_curriculum_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("curriculum")
    group.add_argument("--curriculum", choices=CURRICULUM_CHOICES, help="Projection curriculum")
    group.add_argument("--sigma-min", type=float, help="Below this noise level every transition is projected")
    group.add_argument("--sigma-max", type=float, help="Above this noise level no transition is projected")


def resolve_settings(args: argparse.Namespace, **overrides: Any) -> Settings:
    """Settings with precedence flag > config file > environment > default."""
    return load_settings(
        getattr(args, "config", None),
        log_json=True if getattr(args, "log_json", False) else None,
        delta=getattr(args, "delta", None),
        lambda_ref=getattr(args, "lambda_ref", None),
        sigma_min=getattr(args, "sigma_min", None),
        sigma_max=getattr(args, "sigma_max", None),
        use_reduction=False if getattr(args, "no_reduction", False) else None,
        **overrides,
    )


def projector_from(args: argparse.Namespace, cfg: Settings) -> ProjectorKind | None:
    if args.projector is None:
        return None
    return ProjectorKind(
        tag=ProjectorTag(args.projector),
        lambda_ref=cfg.lambda_ref,
        delta=cfg.delta,
        action_guided=args.action_guided,
        use_reduction=cfg.use_reduction,
    )


def curriculum_from(mode: CurriculumMode, args: argparse.Namespace, cfg: Settings) -> Curriculum:
    """Mode preset; the mid curriculum takes its bounds from the settings."""
    if mode == CurriculumMode.MID:
        return Curriculum.from_mode(mode, cfg.sigma_min, cfg.sigma_max)
    return Curriculum.from_mode(mode, args.sigma_min, args.sigma_max)


def parse_vector(text: str, size: int, what: str) -> np.ndarray:
    """Comma-separated floats of a fixed size."""
    try:
        values = np.asarray([float(v) for v in text.split(",")], dtype=np.float64)
    except ValueError:
        raise RejectedInputError(f"{what} must be comma-separated numbers, got {text!r}")
    if values.shape != (size,) or not np.all(np.isfinite(values)):
        raise RejectedInputError(f"{what} needs {size} finite components, got {text!r}")
    return values


def emit(line: str) -> None:
    """Command output on stdout."""
    sys.stdout.write(line + "\n")
