"""
ReachDiff Dynamics Service

Deterministic black-box discrete-time simulators s_{t+1} = f(s_t, a_t).

Each environment supplies only velocity rates; one shared integrator
applies explicit or semi-implicit Euler to velocities and to the mapped
position components, so stepping, reachable-set reconstruction and
rollouts all follow the same arithmetic path.

Built-in environments:
- double-integrator-1d / double-integrator-2d (linear, control affine)
- unicycle (smooth nonlinear planar kinematics)
- quadrotor-lite (planar quadrotor, 6 states, thrust + torque)
"""

import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence

import numpy as np
import structlog

from src.core.exceptions import ConfigurationError, RejectedInputError, RolloutError
from src.models.environment import EnvSpec, Gate, HeadingAxis, Integrator, PositionLink
from src.models.trajectory import Trajectory

logger = structlog.get_logger(__name__)

GRAVITY = 9.81


class Environment(ABC):
    """
    Black-box simulator with a box action set.

    Subclasses define `velocity_rates` plus the task-level declarations
    used by evaluation (state constraints, reward proxy, slalom gates).
    """

    controllers: tuple[str, ...] = ()
    is_linear: bool = False
    gates: tuple[Gate, ...] = ()
    # Index of the station coordinate and lateral coordinate for gates
    gate_axes: tuple[int, int] | None = None

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self.action_low = np.asarray(spec.action_low, dtype=np.float64)
        self.action_high = np.asarray(spec.action_high, dtype=np.float64)
        self.initial_low = np.asarray(spec.initial_low, dtype=np.float64)
        self.initial_high = np.asarray(spec.initial_high, dtype=np.float64)
        self.velocity_indices = np.asarray(spec.actuated_indices, dtype=np.intp)

    @property
    def name(self) -> str:
        return self.spec.name

    @abstractmethod
    def velocity_rates(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        """Time derivative of the actuated (velocity-like) components."""

    def violations(self, states: np.ndarray) -> np.ndarray:
        """Boolean per time step: state constraint violated."""
        return np.zeros(states.shape[0], dtype=bool)

    def reward_proxy(self, states: np.ndarray) -> float:
        """Monotone task score of a state trajectory."""
        return 0.0

    # ─────────────────────────────────────────────────────────────────────
    # Integration
    # ─────────────────────────────────────────────────────────────────────

    def integrate(self, s: np.ndarray, v_next: np.ndarray) -> np.ndarray:
        """
        Assemble the next state from the current state and next velocities.

        Semi-implicit Euler integrates positions with the new velocities
        (and new headings); explicit Euler uses the current ones.
        """
        nxt = s.copy()
        nxt[self.velocity_indices] = v_next
        source = nxt if self.spec.integrator == Integrator.SEMI_IMPLICIT_EULER else s
        dt = self.spec.dt
        for link in self.spec.position_map:
            rate = source[link.velocity]
            if link.heading is not None:
                heading = source[link.heading]
                factor = math.cos(heading) if link.axis == HeadingAxis.COS else math.sin(heading)
                rate = rate * factor
            nxt[link.position] = s[link.position] + dt * rate
        return nxt

    def clamp_action(self, a: np.ndarray) -> tuple[np.ndarray, bool]:
        """Clamp to the action box; flag whether anything moved."""
        clamped = np.minimum(np.maximum(a, self.action_low), self.action_high)
        return clamped, bool(np.any(clamped != a))

    def sample_initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n initial states uniformly from the S_0 box."""
        return rng.uniform(self.initial_low, self.initial_high, size=(n, self.spec.n_states))

    def survival_steps(self, states: np.ndarray) -> int:
        """Number of leading time steps (after s_0) before the first violation."""
        bad = self.violations(states)[1:]
        hits = np.flatnonzero(bad)
        return int(hits[0]) if hits.size else int(bad.size)

    def gates_passed(self, states: np.ndarray) -> int:
        """Count consecutive gates crossed inside their windows."""
        if not self.gates or self.gate_axes is None:
            return 0
        station_i, lateral_i = self.gate_axes
        station = states[:, station_i]
        lateral = states[:, lateral_i]
        passed = 0
        for gate in self.gates:
            crossings = np.flatnonzero((station[:-1] < gate.station) & (station[1:] >= gate.station))
            if crossings.size == 0:
                break
            t = int(crossings[0])
            frac = (gate.station - station[t]) / (station[t + 1] - station[t])
            at_gate = lateral[t] + frac * (lateral[t + 1] - lateral[t])
            if not gate.low <= at_gate <= gate.high:
                break
            passed += 1
        return passed

    def task_completed(self, states: np.ndarray) -> bool:
        """All gates passed (gate-free envs: no constraint violation)."""
        if self.gates:
            return self.gates_passed(states) == len(self.gates) and not self.violations(states).any()
        return not self.violations(states).any()


# ═════════════════════════════════════════════════════════════════════════
# Built-in environments
# ═════════════════════════════════════════════════════════════════════════

class DoubleIntegrator(Environment):
    """Point mass with acceleration inputs; dim 1 or 2."""

    is_linear = True
    position_bound = 3.0

    controllers = ("lqr-goal", "pd-waypoints")

    def __init__(self, spec: EnvSpec):
        super().__init__(spec)
        self.dim = spec.n_actions

    def velocity_rates(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        return a.copy()

    def violations(self, states: np.ndarray) -> np.ndarray:
        return np.any(np.abs(states[:, : self.dim]) > self.position_bound, axis=1)

    def reward_proxy(self, states: np.ndarray) -> float:
        # progress toward the origin goal
        start = float(np.linalg.norm(states[0, : self.dim]))
        end = float(np.linalg.norm(states[-1, : self.dim]))
        return start - end


class Unicycle(Environment):
    """Planar unicycle: state (x, y, theta, v, omega), inputs (linear, angular) acceleration."""

    controllers = ("pd-waypoints",)
    corridor = 1.5

    def velocity_rates(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        return a.copy()

    def violations(self, states: np.ndarray) -> np.ndarray:
        return np.abs(states[:, 1]) > self.corridor

    def reward_proxy(self, states: np.ndarray) -> float:
        # forward displacement
        return float(states[-1, 0] - states[0, 0])


class QuadrotorLite(Environment):
    """
    Planar quadrotor: state (y, z, phi, vy, vz, omega), inputs (thrust, torque).

    Underactuated: two inputs drive three velocities; lateral motion only
    through tilting.
    """

    controllers = ("lqr-goal", "pd-waypoints", "scripted-slalom")
    mass = 1.0
    inertia = 0.1
    altitude_floor = 0.0
    max_tilt = 1.2
    gates = (
        Gate(station=1.0, low=1.4, high=2.2),
        Gate(station=2.0, low=0.3, high=1.1),
        Gate(station=3.0, low=1.4, high=2.2),
    )
    gate_axes = (0, 1)

    def velocity_rates(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        thrust, torque = a[0], a[1]
        phi = s[2]
        return np.array([
            -thrust * math.sin(phi) / self.mass,
            thrust * math.cos(phi) / self.mass - GRAVITY,
            torque / self.inertia,
        ])

    def violations(self, states: np.ndarray) -> np.ndarray:
        return (states[:, 1] < self.altitude_floor) | (np.abs(states[:, 2]) > self.max_tilt)

    def reward_proxy(self, states: np.ndarray) -> float:
        # gate-passing count
        return float(self.gates_passed(states))


def _double_integrator_spec(dim: int) -> EnvSpec:
    axes = ("x", "y")[:dim]
    return EnvSpec(
        name=f"double-integrator-{dim}d",
        n_states=2 * dim,
        n_actions=dim,
        dt=0.1,
        horizon=16,
        integrator=Integrator.SEMI_IMPLICIT_EULER,
        actuated_mask=(False,) * dim + (True,) * dim,
        position_map=tuple(PositionLink(position=i, velocity=dim + i) for i in range(dim)),
        state_names=axes + tuple(f"v{ax}" for ax in axes),
        action_names=tuple(f"a{ax}" for ax in axes),
        action_low=(-1.0,) * dim,
        action_high=(1.0,) * dim,
        initial_low=(-1.0,) * dim + (-0.5,) * dim,
        initial_high=(1.0,) * dim + (0.5,) * dim,
    )


def _unicycle_spec() -> EnvSpec:
    return EnvSpec(
        name="unicycle",
        n_states=5,
        n_actions=2,
        dt=0.1,
        horizon=32,
        integrator=Integrator.SEMI_IMPLICIT_EULER,
        actuated_mask=(False, False, False, True, True),
        # heading link first so x/y use the updated heading
        position_map=(
            PositionLink(position=2, velocity=4),
            PositionLink(position=0, velocity=3, heading=2, axis=HeadingAxis.COS),
            PositionLink(position=1, velocity=3, heading=2, axis=HeadingAxis.SIN),
        ),
        state_names=("x", "y", "theta", "v", "omega"),
        action_names=("a_lin", "a_ang"),
        action_low=(-1.0, -2.0),
        action_high=(1.0, 2.0),
        initial_low=(-0.2, -0.2, -0.3, 0.0, -0.2),
        initial_high=(0.2, 0.2, 0.3, 0.5, 0.2),
    )


def _quadrotor_spec() -> EnvSpec:
    return EnvSpec(
        name="quadrotor-lite",
        n_states=6,
        n_actions=2,
        dt=0.1,
        horizon=40,
        integrator=Integrator.SEMI_IMPLICIT_EULER,
        actuated_mask=(False, False, False, True, True, True),
        position_map=(
            PositionLink(position=2, velocity=5),
            PositionLink(position=0, velocity=3),
            PositionLink(position=1, velocity=4),
        ),
        state_names=("y", "z", "phi", "vy", "vz", "omega"),
        action_names=("thrust", "torque"),
        action_low=(0.0, -2.0),
        action_high=(2.0 * QuadrotorLite.mass * GRAVITY, 2.0),
        initial_low=(-0.1, 0.9, -0.05, 0.0, -0.1, -0.1),
        initial_high=(0.1, 1.1, 0.05, 0.2, 0.1, 0.1),
    )


_REGISTRY: dict[str, Callable[[], Environment]] = {
    "double-integrator-1d": lambda: DoubleIntegrator(_double_integrator_spec(1)),
    "double-integrator-2d": lambda: DoubleIntegrator(_double_integrator_spec(2)),
    "unicycle": lambda: Unicycle(_unicycle_spec()),
    "quadrotor-lite": lambda: QuadrotorLite(_quadrotor_spec()),
}

ENV_NAMES: tuple[str, ...] = tuple(_REGISTRY)


def get_environment(
    name: str,
    horizon: int | None = None,
    integrator: Integrator | None = None,
) -> Environment:
    """
    Build a registered environment.

    Args:
        name: Registered environment name
        horizon: Optional prediction horizon override
        integrator: Optional integrator override

    Returns:
        Fresh Environment instance
    """
    if name not in _REGISTRY:
        raise ConfigurationError(f"Unknown environment {name!r}; valid: {', '.join(ENV_NAMES)}")
    env = _REGISTRY[name]()
    if horizon is not None or integrator is not None:
        spec = env.spec
        if horizon is not None:
            spec = spec.with_horizon(horizon)
        if integrator is not None:
            spec = spec.with_integrator(integrator)
        env = type(env)(spec)
    return env


def env_from_spec(spec: EnvSpec) -> Environment:
    """Rebuild an environment from a stored header, checking it matches the registry."""
    env = get_environment(spec.name, horizon=spec.horizon, integrator=spec.integrator)
    if env.spec != spec:
        raise ConfigurationError(f"Stored spec for {spec.name!r} differs from the built-in definition")
    return env


# ═════════════════════════════════════════════════════════════════════════
# Operations
# ═════════════════════════════════════════════════════════════════════════

def _as_vector(value: Sequence[float] | np.ndarray, size: int, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (size,):
        raise RejectedInputError(f"{what} must have {size} components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{what} is not finite", value=arr.tolist())
    return arr


def step_checked(
    env: Environment, s: Sequence[float] | np.ndarray, a: Sequence[float] | np.ndarray
) -> tuple[np.ndarray, bool]:
    """
    One simulator step with a flag telling whether the action was clamped.

    Raises:
        RejectedInputError: non-finite or wrongly sized state/action
    """
    s_vec = _as_vector(s, env.spec.n_states, "state")
    a_vec = _as_vector(a, env.spec.n_actions, "action")
    a_vec, clamped = env.clamp_action(a_vec)
    v = s_vec[env.velocity_indices]
    v_next = v + env.spec.dt * env.velocity_rates(s_vec, a_vec)
    return env.integrate(s_vec, v_next), clamped


def step(env: Environment, s: Sequence[float] | np.ndarray, a: Sequence[float] | np.ndarray) -> np.ndarray:
    """s_{t+1} = f(s_t, a_t); actions outside the box are clamped."""
    s_next, clamped = step_checked(env, s, a)
    if clamped:
        logger.debug("Action clamped to box", env=env.name)
    return s_next


def rollout(env: Environment, s0: Sequence[float] | np.ndarray, actions: np.ndarray) -> Trajectory:
    """
    Simulate H actions from s0; the result is admissible by construction.

    The stored actions are the clamped ones actually applied.
    """
    actions = np.asarray(actions, dtype=np.float64)
    if actions.ndim != 2 or actions.shape[0] != env.spec.horizon:
        raise RejectedInputError(
            f"rollout needs {env.spec.horizon} actions, got {actions.shape[0] if actions.ndim else 0}"
        )
    states = np.empty((env.spec.horizon + 1, env.spec.n_states))
    applied = np.empty_like(actions)
    states[0] = _as_vector(s0, env.spec.n_states, "initial state")
    n_clamped = 0
    for t in range(env.spec.horizon):
        try:
            states[t + 1], clamped = step_checked(env, states[t], actions[t])
        except RejectedInputError as e:
            raise RolloutError(e.message, time_index=t)
        applied[t], _ = env.clamp_action(actions[t])
        n_clamped += int(clamped)
    if n_clamped:
        logger.warning("Rollout clamped actions", env=env.name, count=n_clamped)
    return Trajectory(states=states, actions=applied, admissible=True)


def is_admissible(env: Environment, trajectory: Trajectory) -> bool:
    """Bit-exact re-simulation check of a trajectory's actions."""
    if trajectory.actions is None or trajectory.horizon != env.spec.horizon:
        return False
    try:
        replay = rollout(env, trajectory.states[0], trajectory.actions)
    except RejectedInputError:
        return False
    return bool(np.array_equal(replay.states, trajectory.states))
