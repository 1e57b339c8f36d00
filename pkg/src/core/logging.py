"""
ReachDiff Logging Module

Structured logging with structlog: JSON output for batch runs,
pretty printing during development. Logs go to stderr so command output
on stdout stays machine readable.
"""

import logging
import sys
from typing import Any

import structlog

from src.config import settings


def setup_logging(level: str | None = None, json_output: bool | None = None) -> None:
    """
    Configure structured logging for the application.

    - Development: Pretty printed, colorized output
    - JSON mode: one JSON object per event for log aggregation
    """
    level = level or settings.log_level
    if json_output is None:
        json_output = settings.log_json or settings.is_production

    # Shared processors for all environments
    shared_processors: list[Any] = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.StackInfoRenderer(),
        structlog.processors.TimeStamper(fmt="iso"),
    ]

    if json_output:
        shared_processors.extend([
            structlog.processors.format_exc_info,
            structlog.processors.JSONRenderer(),
        ])
    else:
        shared_processors.append(
            structlog.dev.ConsoleRenderer(
                colors=sys.stderr.isatty(),
                exception_formatter=structlog.dev.plain_traceback,
            )
        )

    structlog.configure(
        processors=shared_processors,
        wrapper_class=structlog.make_filtering_bound_logger(logging.getLevelName(level)),
        context_class=dict,
        # stdlib loggers resolve the handler stream at emit time
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    # Configure standard library logging to work with structlog
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=logging.getLevelName(level),
        force=True,
    )

    # Suppress noisy loggers
    for logger_name in ["matplotlib", "PIL"]:
        logging.getLogger(logger_name).setLevel(logging.WARNING)

