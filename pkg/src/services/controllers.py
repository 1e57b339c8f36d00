"""
ReachDiff Scripted Controllers

Closed-loop controllers used to collect admissible demonstration data:
- lqr-goal: discrete LQR around a goal equilibrium
- pd-waypoints: PD tracking of randomly drawn waypoints
- scripted-slalom: quadrotor-lite path through the slalom gates
"""

import math
from abc import ABC, abstractmethod

import numpy as np
import structlog
from scipy.linalg import solve_discrete_are

from src.core.exceptions import ConfigurationError
from src.models.trajectory import Dataset, NormalizationStats, Trajectory
from src.services.dynamics import (
    GRAVITY,
    DoubleIntegrator,
    Environment,
    QuadrotorLite,
    Unicycle,
    rollout,
    step_checked,
)

logger = structlog.get_logger(__name__)

CONTROLLER_NAMES: tuple[str, ...] = ("lqr-goal", "pd-waypoints", "scripted-slalom")


def jacobians(
    env: Environment, s: np.ndarray, a: np.ndarray, eps: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobians (df/ds, df/da) of the black-box step."""
    n, m = env.spec.n_states, env.spec.n_actions
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    for i in range(n):
        d = np.zeros(n)
        d[i] = eps
        A[:, i] = (step_checked(env, s + d, a)[0] - step_checked(env, s - d, a)[0]) / (2 * eps)
    for j in range(m):
        d = np.zeros(m)
        d[j] = eps
        B[:, j] = (step_checked(env, s, a + d)[0] - step_checked(env, s, a - d)[0]) / (2 * eps)
    return A, B


class Controller(ABC):
    """State-feedback policy with per-episode randomization."""

    def __init__(self, env: Environment):
        self.env = env

    def reset(self, s0: np.ndarray, rng: np.random.Generator) -> None:  # noqa: ARG002
        """Draw episode-specific parameters (waypoints, jitter)."""

    @abstractmethod
    def __call__(self, t: int, s: np.ndarray) -> np.ndarray:
        """Raw (possibly out-of-box) action for state s at time t."""


class LQRGoal(Controller):
    """Infinite-horizon discrete LQR toward a fixed equilibrium."""

    def __init__(self, env: Environment):
        super().__init__(env)
        n, m = env.spec.n_states, env.spec.n_actions
        if isinstance(env, QuadrotorLite):
            self.goal = np.array([2.0, 1.5, 0.0, 0.0, 0.0, 0.0])
            self.a_eq = np.array([env.mass * GRAVITY, 0.0])
            Q = np.diag([10.0, 10.0, 1.0, 1.0, 1.0, 0.5])
            R = np.diag([0.05, 0.5])
        else:
            self.goal = np.zeros(n)
            self.a_eq = np.zeros(m)
            Q = np.eye(n)
            R = 0.5 * np.eye(m)
        A, B = jacobians(env, self.goal, self.a_eq)
        P = solve_discrete_are(A, B, Q, R)
        self.K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)

    def __call__(self, t: int, s: np.ndarray) -> np.ndarray:  # noqa: ARG002
        return self.a_eq - self.K @ (s - self.goal)


def _quadrotor_track(
    env: QuadrotorLite, s: np.ndarray, z_ref: float, dz_dy: float, vy_ref: float
) -> np.ndarray:
    """Cascaded tracker: desired accelerations → thrust and tilt → torque."""
    _, z, phi, vy, vz, omega = s
    ay = 1.5 * (vy_ref - vy)
    az = 6.0 * (z_ref - z) + 4.0 * (dz_dy * vy - vz)
    thrust = env.mass * math.hypot(ay, az + GRAVITY)
    phi_des = float(np.clip(math.atan2(-ay, az + GRAVITY), -0.6, 0.6))
    torque = env.inertia * (16.0 * (phi_des - phi) - 6.0 * omega)
    return np.array([thrust, torque])


class PDWaypoints(Controller):
    """PD tracking of randomly drawn waypoints."""

    def reset(self, s0: np.ndarray, rng: np.random.Generator) -> None:
        env = self.env
        if isinstance(env, DoubleIntegrator):
            self.waypoint = rng.uniform(-1.0, 1.0, size=env.dim)
        elif isinstance(env, Unicycle):
            lateral = rng.uniform(-0.5, 0.5, size=2)
            self.waypoints = [(1.0, lateral[0]), (2.0, lateral[1]), (3.0, 0.0), (6.0, 0.0)]
            self.index = 0
        else:
            heights = rng.uniform(0.6, 1.8, size=3)
            self.knots_y = np.array([s0[0], 1.0, 2.0, 3.0, 4.0])
            self.knots_z = np.array([s0[1], *heights, 1.2])

    def __call__(self, t: int, s: np.ndarray) -> np.ndarray:
        env = self.env
        if isinstance(env, DoubleIntegrator):
            target = self.waypoint if t < env.spec.horizon // 2 else np.zeros(env.dim)
            return 2.0 * (target - s[: env.dim]) - 2.0 * s[env.dim :]
        if isinstance(env, Unicycle):
            return self._unicycle(s)
        assert isinstance(env, QuadrotorLite)
        return _track_knots(env, s, self.knots_y, self.knots_z)

    def _unicycle(self, s: np.ndarray) -> np.ndarray:
        x, y, theta, v, omega = s
        wx, wy = self.waypoints[self.index]
        if x >= wx - 0.2 and self.index < len(self.waypoints) - 1:
            self.index += 1
            wx, wy = self.waypoints[self.index]
        heading = math.atan2(wy - y, wx - x)
        error = math.atan2(math.sin(heading - theta), math.cos(heading - theta))
        return np.array([2.0 * (1.0 - v), 4.0 * error - 2.5 * omega])


def _track_knots(env: QuadrotorLite, s: np.ndarray, knots_y: np.ndarray, knots_z: np.ndarray) -> np.ndarray:
    y = s[0]
    z_ref = float(np.interp(y, knots_y, knots_z))
    seg = int(np.clip(np.searchsorted(knots_y, y) - 1, 0, len(knots_y) - 2))
    dz_dy = (knots_z[seg + 1] - knots_z[seg]) / max(knots_y[seg + 1] - knots_y[seg], 1e-6)
    if y >= knots_y[-1]:
        dz_dy = 0.0
    return _quadrotor_track(env, s, z_ref, dz_dy, vy_ref=1.0)


class ScriptedSlalom(Controller):
    """Quadrotor-lite path through the gate centers with per-episode jitter."""

    def reset(self, s0: np.ndarray, rng: np.random.Generator) -> None:
        env = self.env
        assert isinstance(env, QuadrotorLite)
        centers = np.array([(g.low + g.high) / 2.0 for g in env.gates])
        jitter = rng.uniform(-0.15, 0.15, size=len(centers))
        self.knots_y = np.array([s0[0], *(g.station for g in env.gates), env.gates[-1].station + 1.0])
        self.knots_z = np.array([s0[1], *(centers + jitter), 1.3])

    def __call__(self, t: int, s: np.ndarray) -> np.ndarray:  # noqa: ARG002
        assert isinstance(self.env, QuadrotorLite)
        return _track_knots(self.env, s, self.knots_y, self.knots_z)


_CONTROLLERS: dict[str, type[Controller]] = {
    "lqr-goal": LQRGoal,
    "pd-waypoints": PDWaypoints,
    "scripted-slalom": ScriptedSlalom,
}


def make_controller(name: str, env: Environment) -> Controller:
    """Instantiate a named controller, checking env support."""
    if name not in _CONTROLLERS:
        raise ConfigurationError(
            f"Unknown controller {name!r}; valid: {', '.join(CONTROLLER_NAMES)}"
        )
    if name not in env.controllers:
        raise ConfigurationError(
            f"Controller {name!r} is not available for {env.name}; "
            f"valid: {', '.join(env.controllers)}"
        )
    return _CONTROLLERS[name](env)


def generate_dataset(env: Environment, controller: str, n_traj: int, seed: int) -> Dataset:
    """
    Collect closed-loop demonstrations from the env's S_0 box.

    Out-of-box controller actions are clamped and the trajectory is
    re-simulated from its clamped actions, so every stored trajectory is
    admissible bit-exactly.

    Args:
        env: Environment to simulate
        controller: Controller name
        n_traj: Number of trajectories
        seed: Seed for initial states and episode randomization

    Returns:
        Dataset with normalization statistics
    """
    if n_traj < 0:
        raise ConfigurationError("n_traj must be non-negative")
    policy = make_controller(controller, env)
    rng = np.random.default_rng(seed)
    initial_states = env.sample_initial_states(n_traj, rng)
    H = env.spec.horizon
    trajectories: list[Trajectory] = []
    total_clamped = 0
    for s0 in initial_states:
        policy.reset(s0, rng)
        s = s0.copy()
        actions = np.empty((H, env.spec.n_actions))
        for t in range(H):
            actions[t], clamped = env.clamp_action(np.asarray(policy(t, s), dtype=np.float64))
            total_clamped += int(clamped)
            s, _ = step_checked(env, s, actions[t])
        trajectories.append(rollout(env, s0, actions))

    stats = NormalizationStats.from_trajectories(trajectories, env.spec.n_states, env.spec.n_actions)
    if total_clamped:
        logger.warning("Controller actions clamped", env=env.name, controller=controller, count=total_clamped)
    logger.info("Dataset generated", env=env.name, controller=controller, n_traj=n_traj, seed=seed)
    return Dataset(
        env=env.spec,
        trajectories=trajectories,
        stats=stats,
        metadata={"controller": controller, "seed": seed, "clamped_actions": total_clamped},
    )
