"""
ReachDiff Environment Model

Serializable description of a discrete-time environment. The dynamics
themselves live in src.services.dynamics; the EnvSpec is what travels in
dataset and checkpoint headers.
"""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Integrator(str, Enum):
    """Numerical integrator used by a simulator."""
    EXPLICIT_EULER = "explicit-euler"
    SEMI_IMPLICIT_EULER = "semi-implicit-euler"


class HeadingAxis(str, Enum):
    """Trigonometric factor applied to a heading-modulated position link."""
    COS = "cos"
    SIN = "sin"


class PositionLink(BaseModel):
    """
    One position component integrated from one velocity component.

    For heading-modulated links (planar kinematics) the velocity is
    multiplied by cos/sin of the heading component before integration.
    """
    model_config = ConfigDict(frozen=True)

    position: int = Field(ge=0)
    velocity: int = Field(ge=0)
    heading: int | None = Field(default=None, ge=0)
    axis: HeadingAxis | None = None

    @model_validator(mode="after")
    def _heading_pairs_with_axis(self) -> "PositionLink":
        if (self.heading is None) != (self.axis is None):
            raise ValueError("heading and axis must be given together")
        return self


class Gate(BaseModel):
    """Slalom gate: the path must cross `station` with the lateral coordinate inside the window."""
    model_config = ConfigDict(frozen=True)

    station: float
    low: float
    high: float

    @model_validator(mode="after")
    def _window_ordered(self) -> "Gate":
        if not self.low < self.high:
            raise ValueError("gate window must satisfy low < high")
        return self


class EnvSpec(BaseModel):
    """Environment header: dimensions, integrator and actuated structure."""
    model_config = ConfigDict(frozen=True)

    name: str
    n_states: int = Field(ge=1)
    n_actions: int = Field(ge=1)
    dt: float = Field(gt=0.0)
    horizon: int = Field(ge=1)
    integrator: Integrator
    actuated_mask: tuple[bool, ...]
    position_map: tuple[PositionLink, ...] = ()
    state_names: tuple[str, ...]
    action_names: tuple[str, ...]
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]
    initial_low: tuple[float, ...]
    initial_high: tuple[float, ...]

    @model_validator(mode="after")
    def _consistent(self) -> "EnvSpec":
        n, m = self.n_states, self.n_actions
        if len(self.actuated_mask) != n or len(self.state_names) != n:
            raise ValueError("actuated_mask and state_names must have n_states entries")
        if len(self.initial_low) != n or len(self.initial_high) != n:
            raise ValueError("S_0 box must have n_states entries")
        if len(self.action_low) != m or len(self.action_high) != m or len(self.action_names) != m:
            raise ValueError("action box must have n_actions entries")
        if any(lo > hi for lo, hi in zip(self.action_low, self.action_high, strict=True)):
            raise ValueError("action box bounds must satisfy low <= high")
        if any(lo > hi for lo, hi in zip(self.initial_low, self.initial_high, strict=True)):
            raise ValueError("S_0 box bounds must satisfy low <= high")

        positions = [link.position for link in self.position_map]
        if len(set(positions)) != len(positions):
            raise ValueError("each position component may be mapped only once")
        for link in self.position_map:
            if link.position >= n or link.velocity >= n:
                raise ValueError("position_map index out of range")
            if self.actuated_mask[link.position]:
                raise ValueError("a mapped position component cannot be actuated")
            if not self.actuated_mask[link.velocity]:
                raise ValueError("a mapped velocity component must be actuated")
            if link.heading is not None and link.heading not in positions:
                raise ValueError("heading component must itself be a mapped position")
        return self

    @property
    def has_structure(self) -> bool:
        """Whether velocity-only projection is available.

        Every non-actuated component must be a mapped position, otherwise
        the next state cannot be rebuilt from projected velocities.
        """
        if not any(self.actuated_mask) or not self.position_map:
            return False
        mapped = {link.position for link in self.position_map}
        return all(flag or i in mapped for i, flag in enumerate(self.actuated_mask))

    @property
    def actuated_indices(self) -> tuple[int, ...]:
        return tuple(i for i, flag in enumerate(self.actuated_mask) if flag)

    def with_horizon(self, horizon: int) -> "EnvSpec":
        """Copy with a different prediction horizon."""
        return EnvSpec.model_validate({**self.model_dump(), "horizon": horizon})

    def with_integrator(self, integrator: Integrator) -> "EnvSpec":
        """Copy with a different integrator."""
        return EnvSpec.model_validate({**self.model_dump(), "integrator": integrator})
