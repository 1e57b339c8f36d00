"""
ReachDiff Configuration Module

Centralized settings management using Pydantic v2 BaseSettings.
Supports environment variables, .env files and an optional TOML/JSON
config file layered underneath command-line overrides.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

import orjson
from pydantic import Field, ValidationError, computed_field
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.core.exceptions import ConfigurationError


class Settings(BaseSettings):
    """Application settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="REACHDIFF_",
        case_sensitive=False,
        extra="ignore",
    )

    # ─────────────────────────────────────────────────────────────────────────
    # Application Settings
    # ─────────────────────────────────────────────────────────────────────────
    app_name: str = "ReachDiff"
    app_version: str = "0.1.0"
    environment: Literal["development", "production"] = "development"

    # ─────────────────────────────────────────────────────────────────────────
    # Logging
    # ─────────────────────────────────────────────────────────────────────────
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    log_json: bool = Field(default=False, description="Render logs as JSON lines")

    # ─────────────────────────────────────────────────────────────────────────
    # Simplex Solver (convex-hull projection)
    # ─────────────────────────────────────────────────────────────────────────
    simplex_max_iter: int = Field(default=200, ge=1, le=100_000)
    simplex_tol: float = Field(default=1e-8, gt=0.0)

    # ─────────────────────────────────────────────────────────────────────────
    # Projection
    # ─────────────────────────────────────────────────────────────────────────
    delta: float = Field(default=0.1, gt=0.0, lt=1.0, description="Action-guided shrink fraction")
    lambda_ref: float = Field(default=1.0, ge=0.0, description="Reference trade-off coefficient")
    ref_max_iter: int = Field(default=100, ge=1)
    use_reduction: bool = Field(default=True, description="Project actuated velocities only")

    # ─────────────────────────────────────────────────────────────────────────
    # Inverse Dynamics
    # ─────────────────────────────────────────────────────────────────────────
    id_eps_linear: float = Field(default=1e-9, gt=0.0)
    id_eps_nonlinear: float = Field(default=1e-7, gt=0.0)
    id_polytopic_iters: int = Field(default=50, ge=1)
    id_blackbox_iters: int = Field(default=500, ge=1)
    id_delta: float = Field(default=0.5, gt=0.0, lt=1.0)

    # ─────────────────────────────────────────────────────────────────────────
    # Noise Schedule
    # ─────────────────────────────────────────────────────────────────────────
    schedule_steps: int = Field(default=5, ge=2)
    sigma_first: float = Field(default=80.0, gt=0.0)
    sigma_last: float = Field(default=0.002, gt=0.0)
    rho: float = Field(default=7.0, gt=0.0)
    p_mean: float = -1.2
    p_std: float = Field(default=1.2, gt=0.0)

    # ─────────────────────────────────────────────────────────────────────────
    # Projection Curriculum
    # ─────────────────────────────────────────────────────────────────────────
    sigma_min: float = Field(default=0.0021, gt=0.0)
    sigma_max: float = Field(default=0.2, gt=0.0)

    # ─────────────────────────────────────────────────────────────────────────
    # Denoiser Training
    # ─────────────────────────────────────────────────────────────────────────
    train_steps: int = Field(default=2000, ge=0)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    grad_clip: float = Field(default=1.0, gt=0.0)
    denoiser_width: int = Field(default=64, ge=4)
    denoiser_kernel: int = Field(default=5, ge=1)
    sigma_embed_dim: int = Field(default=32, ge=2)

    # ─────────────────────────────────────────────────────────────────────────
    # Correction Policy
    # ─────────────────────────────────────────────────────────────────────────
    policy_width: int = Field(default=64, ge=4)
    policy_steps: int = Field(default=2000, ge=1)
    policy_batch_size: int = Field(default=256, ge=1)
    policy_learning_rate: float = Field(default=1e-3, gt=0.0)
    policy_sigma_fraction: float = Field(default=0.1, gt=0.0, le=1.0)

    # ─────────────────────────────────────────────────────────────────────────
    # Evaluation
    # ─────────────────────────────────────────────────────────────────────────
    eval_workers: int = Field(default=1, ge=1, le=64)

    # ─────────────────────────────────────────────────────────────────────────
    # Computed Properties
    # ─────────────────────────────────────────────────────────────────────────
    @computed_field  # type: ignore[prop-decorator]
    @property
    def is_production(self) -> bool:
        """Check if running in production environment."""
        return self.environment == "production"


def read_config_file(path: Path) -> dict[str, Any]:
    """
    Read a TOML or JSON config file into a flat dict of setting values.

    Args:
        path: Config file; the suffix selects the parser

    Returns:
        Mapping of setting names to values
    """
    if not path.is_file():
        raise ConfigurationError(f"Config file not found: {path}")
    raw = path.read_bytes()
    try:
        if path.suffix == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        elif path.suffix == ".json":
            data = orjson.loads(raw)
        else:
            raise ConfigurationError(
                f"Unsupported config file type {path.suffix!r}; valid: .toml, .json"
            )
    except (tomllib.TOMLDecodeError, orjson.JSONDecodeError) as e:
        raise ConfigurationError(f"Could not parse config file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {path} must contain a table/object")
    # Allow a [reachdiff] table as well as top-level keys
    section = data.get("reachdiff", data)
    return {str(k).replace("-", "_"): v for k, v in section.items()}


def load_settings(config_file: Path | None = None, **overrides: Any) -> Settings:
    """
    Build settings with precedence: overrides > config file > environment > defaults.

    Overrides whose value is None are ignored so that unset CLI flags fall
    through to the lower layers.
    """
    values: dict[str, Any] = {}
    if config_file is not None:
        values.update(read_config_file(config_file))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return Settings(**values)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}")


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# Export settings instance
settings = get_settings()
