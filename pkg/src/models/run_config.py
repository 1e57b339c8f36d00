"""
ReachDiff Run Configuration

Resolved configuration of one command invocation, echoed into every
artifact header it writes.
"""

from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from src.config import Settings

# Settings fields that do not affect artifacts
_EXCLUDED_SETTINGS = {"app_name", "environment", "log_level", "log_json", "is_production"}


class RunConfig(BaseModel):
    """One CLI invocation after flag > config file > default resolution."""
    model_config = ConfigDict(frozen=True)

    subcommand: str
    env: str | None = None
    seed: int = 0
    inputs: dict[str, Path] = Field(default_factory=dict)
    out: Path | None = None
    options: dict[str, Any] = Field(default_factory=dict)
    settings: dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def resolve(
        cls,
        subcommand: str,
        cfg: Settings,
        env: str | None = None,
        seed: int = 0,
        inputs: dict[str, Path] | None = None,
        out: Path | None = None,
        **options: Any,
    ) -> "RunConfig":
        resolved = {
            k: v for k, v in cfg.model_dump(mode="json").items() if k not in _EXCLUDED_SETTINGS
        }
        return cls(
            subcommand=subcommand,
            env=env,
            seed=seed,
            inputs=inputs or {},
            out=out,
            options={k: v for k, v in options.items() if v is not None},
            settings=resolved,
        )

    def header(self) -> dict[str, Any]:
        """JSON-ready record for artifact headers."""
        return self.model_dump(mode="json")
