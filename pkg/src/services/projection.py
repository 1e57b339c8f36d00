"""
ReachDiff Projection Service

Maps predicted next states onto (approximately) admissible ones:

- P: Euclidean projection onto the hull of vertex successors
- Pref: projection trading distance to the prediction against distance
  to a reference state
- PA: the simulator successor of the predicted action
- PSA: the successor of the predicted action plus a learned correction

Trajectories are projected in one chronological pass; a per-step gate
decides which transitions are projected.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import structlog

from src.core.exceptions import ConfigurationError, RejectedInputError
from src.models.projection import ProjectorKind, ProjectorTag, SolverConfig
from src.models.trajectory import Trajectory
from src.services.dynamics import Environment, step_checked
from src.services.reachability import (
    ActionPolytope,
    action_polytope,
    reach_vertices,
    reduce_to_actuated,
    shrunk_vertices,
)
from src.services.simplex import SimplexSolution, project_to_hull

if TYPE_CHECKING:
    from src.services.correction_policy import CorrectionPolicy

logger = structlog.get_logger(__name__)

DISTANCE_FLOOR = 1e-12
REF_STEP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class StateProjection:
    """One projected transition."""
    state: np.ndarray
    action: np.ndarray | None
    residual: float
    iterations: int = 0
    weights: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    """Projected trajectory plus per-step diagnostics."""
    trajectory: Trajectory
    residuals: np.ndarray
    projected: np.ndarray
    iterations: np.ndarray

    @property
    def total_residual(self) -> float:
        return float(self.residuals.sum())


def reference_projection(
    predicted: np.ndarray,
    reference: np.ndarray,
    points: np.ndarray,
    lambda_ref: float,
    solver: SolverConfig | None = None,
) -> SimplexSolution:
    """
    Minimize ‖predicted − c‖ + λ‖reference − c‖ over conv(points).

    Majorization-minimization: each round projects the distance-weighted
    average of prediction and reference. λ = 0 is a single hull projection.
    """
    solver = solver or SolverConfig()
    solution = project_to_hull(predicted, points, solver.simplex_max_iter, solver.simplex_tol)
    if lambda_ref == 0.0:
        return solution
    iterations = solution.iterations
    current = solution.projected_point
    for _ in range(solver.ref_max_iter):
        w_pred = 1.0 / max(float(np.linalg.norm(predicted - current)), DISTANCE_FLOOR)
        w_ref = lambda_ref / max(float(np.linalg.norm(reference - current)), DISTANCE_FLOOR)
        target = (w_pred * predicted + w_ref * reference) / (w_pred + w_ref)
        solution = project_to_hull(target, points, solver.simplex_max_iter, solver.simplex_tol)
        iterations += solution.iterations
        moved = float(np.linalg.norm(solution.projected_point - current))
        current = solution.projected_point
        if moved < REF_STEP_TOL:
            break
    return SimplexSolution(
        weights=solution.weights,
        projected_point=current,
        residual=float(np.linalg.norm(predicted - current)),
        iterations=iterations,
        converged=solution.converged,
    )


def _require(kind: ProjectorKind, value: object, what: str) -> None:
    if value is None:
        raise ConfigurationError(f"Projector {kind.label} requires {what}")


def project_state(
    env: Environment,
    s_t: np.ndarray,
    s_pred: np.ndarray,
    kind: ProjectorKind,
    s_ref: np.ndarray | None = None,
    a_pred: np.ndarray | None = None,
    policy: "CorrectionPolicy | None" = None,
    polytope: ActionPolytope | None = None,
    solver: SolverConfig | None = None,
) -> StateProjection:
    """
    Project one predicted successor of s_t.

    Args:
        env: Environment
        s_t: Current (base) state
        s_pred: Predicted next state
        kind: Projector selection
        s_ref: Reference next state (Pref)
        a_pred: Predicted action (PA, PSA, action-guided search)
        policy: Correction policy (PSA)
        polytope: Action polytope; defaults to the env's box corners
        solver: Hull-projection caps (default: SolverConfig defaults)

    Returns:
        StateProjection with the next state and the action explaining it
    """
    s_t = np.asarray(s_t, dtype=np.float64).reshape(-1)
    s_pred = np.asarray(s_pred, dtype=np.float64).reshape(-1)
    if s_pred.shape[0] != env.spec.n_states:
        raise RejectedInputError("predicted state has the wrong dimension")
    if kind.needs_reference:
        _require(kind, s_ref, "a reference state")
    if kind.needs_actions:
        _require(kind, a_pred, "a predicted action")

    if kind.action_backed:
        assert a_pred is not None
        action, _ = env.clamp_action(np.asarray(a_pred, dtype=np.float64).reshape(-1))
        if kind.tag == ProjectorTag.PSA:
            _require(kind, policy, "a correction policy")
            assert policy is not None
            coasted, _ = step_checked(env, s_t, action)
            action, _ = env.clamp_action(action + policy.correct(s_pred - coasted))
        s_next, _ = step_checked(env, s_t, action)
        return StateProjection(s_next, action, float(np.linalg.norm(s_pred - s_next)))

    solver = solver or SolverConfig()
    vertices = polytope if polytope is not None else action_polytope(env)
    if kind.action_guided:
        assert a_pred is not None
        vertices = shrunk_vertices(vertices, a_pred, kind.delta, env=env)
    reach = reach_vertices(env, s_t, vertices)
    target = s_pred
    reference = None if s_ref is None else np.asarray(s_ref, dtype=np.float64).reshape(-1)
    if kind.use_reduction:
        reach_r, target, rebuild = reduce_to_actuated(env, reach, s_pred)
        if reference is not None and reach_r.reduced:
            reference = reference[env.velocity_indices]
    else:
        reach_r = reach

    if kind.tag == ProjectorTag.PREF:
        assert reference is not None
        solution = reference_projection(target, reference, reach_r.vertex_successors, kind.lambda_ref, solver)
    else:
        solution = project_to_hull(
            target, reach_r.vertex_successors, solver.simplex_max_iter, solver.simplex_tol
        )

    if reach_r.reduced:
        s_next = rebuild(solution.projected_point)
    else:
        s_next = solution.projected_point
    action = solution.weights @ reach.vertex_actions
    return StateProjection(
        state=s_next,
        action=action,
        residual=float(np.linalg.norm(s_pred - s_next)),
        iterations=solution.iterations,
        weights=solution.weights,
    )


def project_trajectory(
    env: Environment,
    trajectory: Trajectory,
    kind: ProjectorKind,
    reference: Trajectory | None = None,
    gate: np.ndarray | None = None,
    policy: "CorrectionPolicy | None" = None,
    solver: SolverConfig | None = None,
) -> ProjectionResult:
    """
    Project a predicted trajectory transition by transition.

    The hull for step t+1 is built at output state t whether or not that
    state was projected; skipped transitions keep the raw prediction.

    Args:
        env: Environment
        trajectory: Predicted trajectory; states[0] is the known initial state
        kind: Projector selection
        reference: Reference trajectory (Pref)
        gate: Boolean per transition, True = project (default: all)
        policy: Correction policy (PSA)
        solver: Hull-projection caps

    Returns:
        ProjectionResult
    """
    H = trajectory.horizon
    if reference is not None and reference.horizon != H:
        raise RejectedInputError(
            f"reference horizon {reference.horizon} differs from trajectory horizon {H}"
        )
    if kind.needs_reference and reference is None:
        raise ConfigurationError(f"Projector {kind.label} requires a reference trajectory")
    if kind.needs_actions and trajectory.actions is None:
        raise ConfigurationError(f"Projector {kind.label} requires trajectory actions")
    project_mask = np.ones(H, dtype=bool) if gate is None else np.asarray(gate, dtype=bool)
    if project_mask.shape != (H,):
        raise RejectedInputError(f"gate must have {H} entries, got {project_mask.shape}")

    polytope = None if kind.action_backed else action_polytope(env)
    states = trajectory.states.copy()
    actions = None if trajectory.actions is None else trajectory.actions.copy()
    residuals = np.zeros(H)
    iterations = np.zeros(H, dtype=np.int64)
    for t in range(H):
        if not project_mask[t]:
            continue
        result = project_state(
            env,
            states[t],
            trajectory.states[t + 1],
            kind,
            s_ref=None if reference is None else reference.states[t + 1],
            a_pred=None if trajectory.actions is None else trajectory.actions[t],
            policy=policy,
            polytope=polytope,
            solver=solver,
        )
        states[t + 1] = result.state
        if actions is not None and result.action is not None:
            actions[t] = result.action
        residuals[t] = result.residual
        iterations[t] = result.iterations

    if project_mask.all():
        admissible = kind.action_backed
    elif not project_mask.any():
        admissible = trajectory.admissible
    else:
        admissible = False
    projected = Trajectory(states=states, actions=actions, admissible=admissible)
    return ProjectionResult(
        trajectory=projected,
        residuals=residuals,
        projected=project_mask.copy(),
        iterations=iterations,
    )
