"""
ReachDiff Correction Policy Models
"""

from pydantic import BaseModel, ConfigDict, Field

from src.config import Settings


class PolicyConfig(BaseModel):
    """Training configuration of the action-correction network."""
    model_config = ConfigDict(frozen=True)

    width: int = Field(default=64, ge=4)
    steps: int = Field(default=2000, ge=1)
    batch_size: int = Field(default=256, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    sigma_fraction: float = Field(
        default=0.1, gt=0.0, le=1.0, description="δa std as a fraction of the action half-width"
    )
    seed: int = 0

    @classmethod
    def from_settings(cls, settings: Settings, seed: int = 0) -> "PolicyConfig":
        return cls(
            width=settings.policy_width,
            steps=settings.policy_steps,
            batch_size=settings.policy_batch_size,
            learning_rate=settings.policy_learning_rate,
            sigma_fraction=settings.policy_sigma_fraction,
            seed=seed,
        )
