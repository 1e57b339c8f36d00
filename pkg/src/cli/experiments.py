"""
ReachDiff Experiment Command

evaluate: run an experiment plan and write its report bundle.
"""

import argparse
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any

import orjson
from pydantic import ValidationError

from src.cli.common import emit, resolve_settings
from src.core.exceptions import EXIT_OK, ConfigurationError
from src.models.experiment import ExperimentPlan
from src.models.run_config import RunConfig
from src.services.evaluation import run_experiment


def read_plan(path: Path) -> ExperimentPlan:
    """Load a JSON or TOML plan; relative checkpoint paths resolve against its directory."""
    if not path.is_file():
        raise ConfigurationError(f"Plan file not found: {path}")
    raw = path.read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8")) if path.suffix == ".toml" else orjson.loads(raw)
    except (tomllib.TOMLDecodeError, orjson.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigurationError(f"Could not parse plan {path}: {e}")
    for model in data.get("models", []):
        if "checkpoint" in model and not Path(model["checkpoint"]).is_absolute():
            model["checkpoint"] = str(path.parent / model["checkpoint"])
    try:
        return ExperimentPlan.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid plan {path}: {e}")


def evaluate(args: argparse.Namespace) -> int:
    cfg = resolve_settings(args, eval_workers=args.workers)
    plan = read_plan(args.plan)
    run = RunConfig.resolve("evaluate", cfg, env=plan.env, seed=args.seed, inputs={"plan": args.plan}, out=args.out)
    bundle = run_experiment(plan, args.out, workers=cfg.eval_workers, run_config=run.header(), cfg=cfg)
    for row in bundle.aggregates:
        emit(f"{row['model']}\t{row['metric']}\t{row['mean']!r}\t{row['std']!r}\t{row['n']}")
    return EXIT_OK


def register(subparsers: Any, parent: argparse.ArgumentParser) -> None:
    p = subparsers.add_parser("evaluate", parents=[parent], help="Run an experiment plan")
    p.add_argument("--plan", type=Path, required=True, help="Experiment plan (JSON or TOML)")
    p.add_argument("--out", type=Path, required=True, help="Report directory")
    p.add_argument("--workers", type=int, help="Concurrent cells")
    p.set_defaults(handler=evaluate)
