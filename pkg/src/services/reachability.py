"""
ReachDiff Reachability Service

Polytopic under-approximation of one-step reachable sets: the convex hull
of the successors of a state under the vertices of an action polytope,
its shrunk action-guided variant and the velocity-only reduction for
environments with actuated structure.
"""

import itertools
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import structlog

from src.core.exceptions import RejectedInputError
from src.services.dynamics import Environment, step_checked
from src.services.simplex import project_to_hull

logger = structlog.get_logger(__name__)

# Above this many action dimensions only axis extremes are used as vertices
MAX_CORNER_DIM = 6


@dataclass(frozen=True, eq=False)
class ActionPolytope:
    """Vertex list under-approximating the admissible action set."""
    vertices: np.ndarray
    clamped: bool = False

    def __post_init__(self) -> None:
        vertices = np.atleast_2d(np.asarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "vertices", vertices)

    @property
    def m(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def mean(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


@dataclass(frozen=True, eq=False)
class ReachPolytope:
    """Successors of base_state under each vertex action, in vertex order."""
    base_state: np.ndarray
    vertex_actions: np.ndarray
    vertex_successors: np.ndarray
    reduced: bool = False

    @property
    def m(self) -> int:
        return int(self.vertex_actions.shape[0])


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Affine action model f(s, a) ≈ offset + matrix @ (a − base_action) at a fixed state."""
    base_action: np.ndarray
    offset: np.ndarray
    matrix: np.ndarray

    def predict(self, a: np.ndarray) -> np.ndarray:
        return self.offset + self.matrix @ (np.asarray(a, dtype=np.float64) - self.base_action)


def action_polytope(env: Environment) -> ActionPolytope:
    """
    Box-corner polytope of the env's action set.

    Corners are enumerated with the first action dimension varying slowest
    and the lower bound first. For more than MAX_CORNER_DIM action
    dimensions the 2·n axis extremes through the box center are used instead.
    """
    low, high = env.action_low, env.action_high
    n = low.shape[0]
    if n <= MAX_CORNER_DIM:
        corners = itertools.product(*((lo, hi) for lo, hi in zip(low, high, strict=True)))
        return ActionPolytope(np.array(list(corners), dtype=np.float64))
    center = (low + high) / 2.0
    vertices = []
    for i in range(n):
        for bound in (low[i], high[i]):
            v = center.copy()
            v[i] = bound
            vertices.append(v)
    return ActionPolytope(np.array(vertices))


def reach_vertices(env: Environment, s: np.ndarray, polytope: ActionPolytope) -> ReachPolytope:
    """Step s under every polytope vertex; C(s) is the hull of the result."""
    base = np.asarray(s, dtype=np.float64).reshape(-1)
    successors = np.empty((polytope.m, env.spec.n_states))
    actions = np.empty_like(polytope.vertices)
    for i, vertex in enumerate(polytope.vertices):
        successors[i], _ = step_checked(env, base, vertex)
        actions[i], _ = env.clamp_action(vertex)
    return ReachPolytope(base_state=base, vertex_actions=actions, vertex_successors=successors)


def shrunk_vertices(
    polytope: ActionPolytope,
    a_center: np.ndarray,
    delta: float,
    env: Environment | None = None,
) -> ActionPolytope:
    """
    Vertices v̂_i = a_center + δ(v_i − mean(v)) of a search box around a_center.

    Args:
        polytope: Original action polytope
        a_center: Center of the shrunk search space
        delta: Shrink fraction in (0, 1)
        env: When given, vertices are clamped to its action box

    Returns:
        Shrunk polytope; `clamped` is set when clamping moved a vertex
    """
    if not 0.0 < delta < 1.0:
        raise RejectedInputError(f"shrink fraction must lie in (0, 1), got {delta}")
    center = np.asarray(a_center, dtype=np.float64).reshape(-1)
    if center.shape[0] != polytope.vertices.shape[1]:
        raise RejectedInputError("a_center dimension does not match the polytope")
    shrunk = center + delta * (polytope.vertices - polytope.mean)
    if env is None:
        return ActionPolytope(shrunk)
    clamped = np.minimum(np.maximum(shrunk, env.action_low), env.action_high)
    return ActionPolytope(clamped, clamped=bool(np.any(clamped != shrunk)))


def reduce_to_actuated(
    env: Environment, reach: ReachPolytope, predicted: np.ndarray
) -> tuple[ReachPolytope, np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """
    Restrict a projection problem to the actuated (velocity) components.

    The returned closure rebuilds the full next state from projected
    velocities through the env integrator, so positions follow
    x_{t+1} = x_t + dt·v_{t+1} (semi-implicit) or x_t + dt·v_t (explicit).
    Environments without actuated structure get the identity reduction.

    Returns:
        Tuple of (reduced reach polytope, reduced prediction, reconstruction)
    """
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1)
    if not env.spec.has_structure:
        return reach, predicted, lambda full: np.asarray(full, dtype=np.float64).copy()
    idx = env.velocity_indices
    reduced = ReachPolytope(
        base_state=reach.base_state,
        vertex_actions=reach.vertex_actions,
        vertex_successors=reach.vertex_successors[:, idx],
        reduced=True,
    )
    base = reach.base_state

    def reconstruct(velocities: np.ndarray) -> np.ndarray:
        return env.integrate(base, np.asarray(velocities, dtype=np.float64))

    return reduced, predicted[idx], reconstruct


def linear_model(env: Environment, s: np.ndarray) -> LinearModel:
    """
    Finite-difference affine model of a ↦ f(s, a) around the box center.

    Columns use a step of one half-width along each action axis, so the
    model is exact for linear environments.
    """
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    center = (env.action_low + env.action_high) / 2.0
    half = (env.action_high - env.action_low) / 2.0
    offset, _ = step_checked(env, s, center)
    matrix = np.zeros((env.spec.n_states, env.spec.n_actions))
    for j in range(env.spec.n_actions):
        h = half[j] if half[j] > 0.0 else 1.0
        shifted = center.copy()
        shifted[j] += h
        matrix[:, j] = (step_checked(env, s, shifted)[0] - offset) / h
    return LinearModel(base_action=center, offset=offset, matrix=matrix)


def hull_contains(point: np.ndarray, points: np.ndarray, tol: float = 1e-8) -> bool:
    """Membership test: the hull projection residual is within tol."""
    return project_to_hull(point, points).residual <= tol
