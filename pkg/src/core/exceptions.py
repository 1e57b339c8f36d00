"""
ReachDiff Exceptions

Error hierarchy shared by the library and the command line. Every error
carries the process exit code the CLI reports for it.
"""

from typing import Any

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_RUNTIME = 3


class ReachDiffError(Exception):
    """Base class for all ReachDiff errors."""

    exit_code: int = EXIT_RUNTIME

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context


class ConfigurationError(ReachDiffError):
    """Invalid or incompatible configuration (unknown names, missing inputs)."""

    exit_code = EXIT_USAGE


class RejectedInputError(ReachDiffError):
    """Numeric input violating an operation's preconditions."""

    exit_code = EXIT_USAGE


class RolloutError(RejectedInputError):
    """A step inside a rollout rejected its input."""

    def __init__(self, message: str, time_index: int, **context: Any):
        super().__init__(f"{message} (t={time_index})", time_index=time_index, **context)
        self.time_index = time_index


class CheckpointMismatchError(ReachDiffError):
    """Checkpoint does not match the requested environment or modality."""

    exit_code = EXIT_USAGE


class ArtifactFormatError(ReachDiffError):
    """Artifact file is corrupt or has an unsupported format."""

    exit_code = EXIT_RUNTIME


class DatasetIntegrityError(ReachDiffError):
    """A trajectory claiming admissibility fails re-simulation."""

    exit_code = EXIT_VERIFICATION


class TrainingDivergedError(ReachDiffError):
    """Training produced a non-finite loss; holds the last good checkpoint."""

    exit_code = EXIT_RUNTIME

    def __init__(self, message: str, checkpoint: Any = None, **context: Any):
        super().__init__(message, **context)
        self.checkpoint = checkpoint
