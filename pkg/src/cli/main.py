"""
ReachDiff Command Line Entry Point

Parser factory with per-area subcommand registration and the mapping
from library errors to process exit codes.
"""

import argparse
import sys

import structlog
from pydantic import ValidationError

from src.cli import data, experiments, sampling, training
from src.cli.common import ReachDiffArgumentParser, common_parent
from src.config import settings
from src.core.exceptions import EXIT_RUNTIME, EXIT_USAGE, ReachDiffError
from src.core.logging import setup_logging

logger = structlog.get_logger(__name__)

EPILOG = """
Examples:
  reachdiff gen-data --env double-integrator-1d --n-traj 200 --out data/di.rdds
  reachdiff train --dataset data/di.rdds --modality SA --projector Pref --curriculum mid --out di.rdck
  reachdiff sample --checkpoint di.rdck --projector PA --batch 32 --out di_pa.rdtr
  reachdiff verify --input di_pa.rdtr --id
  reachdiff schedule --N 5

Exit codes: 0 ok, 1 usage, 2 verification failure, 3 runtime failure.
"""


def build_parser() -> argparse.ArgumentParser:
    """
    Application factory for the command line.

    Each command module registers its subcommands against a shared
    parent parser carrying --config, --log-json and --seed.
    """
    parser = ReachDiffArgumentParser(
        prog="reachdiff",
        description=f"{settings.app_name} {settings.app_version}: diffusion trajectories with reachable-set projections",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    parent = common_parent()
    data.register(subparsers, parent)
    training.register(subparsers, parent)
    sampling.register(subparsers, parent)
    experiments.register(subparsers, parent)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Parse argv, dispatch and return the exit status."""
    args = build_parser().parse_args(argv)
    setup_logging(json_output=True if args.log_json else None)
    try:
        return int(args.handler(args))
    except ReachDiffError as e:
        logger.error("Command failed", command=args.command, error=e.message, exit_code=e.exit_code, **e.context)
        sys.stderr.write(f"reachdiff {args.command}: {e.message}\n")
        return e.exit_code
    except ValidationError as e:
        logger.error("Invalid parameters", command=args.command, error=str(e))
        sys.stderr.write(f"reachdiff {args.command}: {e}\n")
        return EXIT_USAGE
    except OSError as e:
        logger.error("I/O failure", command=args.command, error=str(e))
        sys.stderr.write(f"reachdiff {args.command}: {e}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
