"""
ReachDiff Inverse Dynamics Service

Recovers an action explaining a state transition, used only to verify
admissibility of generated trajectories.

Methods:
- polytopic: repeated hull projection over a search box shrinking around
  the current guess
- blackbox: random perturbations scaled to the residual, accepted when they
  improve, followed by a golden-section line search along the accepted direction
- polytopic-then-blackbox: polytopic warm start refined by blackbox
- analytic-linear: bounded least squares on the finite-difference linear
  model (exact on linear environments)
"""

from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog
from scipy.optimize import lsq_linear, minimize_scalar

from src.core.exceptions import RejectedInputError
from src.core.storage import write_json
from src.models.inverse import AdmissibilityReport, IDConfig, IDMethod
from src.models.trajectory import Trajectory
from src.services.dynamics import Environment, step_checked
from src.services.reachability import (
    ActionPolytope,
    action_polytope,
    linear_model,
    reach_vertices,
    shrunk_vertices,
)
from src.services.simplex import project_to_hull

logger = structlog.get_logger(__name__)

LINESEARCH_BOUND = 4.0
SENSITIVITY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class IDResult:
    """Recovered action, its successor and the remaining residual."""
    action: np.ndarray
    next_state: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = ()


def _residual_fn(env: Environment, s: np.ndarray, target: np.ndarray) -> Callable[[np.ndarray], float]:
    def residual(a: np.ndarray) -> float:
        nxt, _ = step_checked(env, s, a)
        return float(np.linalg.norm(target - nxt))
    return residual


def _polytopic(
    env: Environment, s: np.ndarray, target: np.ndarray, cfg: IDConfig, eps: float
) -> tuple[np.ndarray, list[float]]:
    """Best action found and the best residual after each iteration."""
    base = action_polytope(env)
    residual = _residual_fn(env, s, target)
    guess, _ = env.clamp_action(base.mean)
    best_a, best_r = guess, residual(guess)
    history = [best_r]
    scale = 1.0
    for _ in range(cfg.polytopic_iters):
        if best_r <= eps:
            break
        if scale < 1.0:
            search = shrunk_vertices(base, guess, scale, env=env)
        else:
            search = ActionPolytope(base.vertices)
        reach = reach_vertices(env, s, search)
        solution = project_to_hull(
            target, reach.vertex_successors, cfg.solver.simplex_max_iter, cfg.solver.simplex_tol
        )
        guess, _ = env.clamp_action(solution.weights @ reach.vertex_actions)
        r = residual(guess)
        if r < best_r:
            best_a, best_r = guess, r
        history.append(best_r)
        scale *= cfg.delta
    return best_a, history


def _golden_step(line: Callable[[float], float], r_unit: float) -> float:
    """
    Golden-section step length over [0, LINESEARCH_BOUND].

    The unit step already improved on α = 0, so (0, 1, bound) brackets a
    minimum whenever f(1) < f(bound); otherwise the far end is taken.
    """
    r_far = line(LINESEARCH_BOUND)
    if r_far <= r_unit:
        return LINESEARCH_BOUND
    search = minimize_scalar(
        line,
        bracket=(0.0, 1.0, LINESEARCH_BOUND),
        method="golden",
        options={"xtol": 1e-10},
    )
    return float(np.clip(search.x, 0.0, LINESEARCH_BOUND))


def _blackbox(
    env: Environment,
    s: np.ndarray,
    target: np.ndarray,
    start: np.ndarray,
    cfg: IDConfig,
    eps: float,
) -> tuple[np.ndarray, list[float]]:
    """Accepted action and the residual after each iteration (non-increasing)."""
    residual = _residual_fn(env, s, target)
    rng = np.random.default_rng(cfg.seed)
    sensitivity = np.linalg.norm(linear_model(env, s).matrix, axis=0)
    sensitivity = np.maximum(sensitivity, SENSITIVITY_FLOOR)
    a, r = start.copy(), residual(start)
    history = [r]
    for _ in range(cfg.blackbox_iters):
        if r <= eps:
            break
        direction = rng.normal(0.0, 1.0, size=a.shape) * (0.5 * r / sensitivity)
        candidate, _ = env.clamp_action(a + direction)
        r_candidate = residual(candidate)
        if r_candidate < r:
            base = a

            def line(alpha: float) -> float:
                return residual(env.clamp_action(base + alpha * direction)[0])

            stepped, _ = env.clamp_action(a + _golden_step(line, r_candidate) * direction)
            r_stepped = residual(stepped)
            if r_stepped < r_candidate:
                candidate, r_candidate = stepped, r_stepped
            a, r = candidate, r_candidate
        history.append(r)
    return a, history


def _analytic_linear(env: Environment, s: np.ndarray, target: np.ndarray) -> np.ndarray:
    if not env.is_linear:
        logger.warning("Analytic inverse dynamics on a nonlinear environment", env=env.name)
    model = linear_model(env, s)
    rhs = target - model.offset + model.matrix @ model.base_action
    low, high = env.action_low, env.action_high
    # lsq_linear needs strictly ordered bounds
    high = np.where(low == high, np.nextafter(low, np.inf), high)
    solution = lsq_linear(model.matrix, rhs, bounds=(low, high), method="bvls", tol=1e-14)
    return env.clamp_action(solution.x)[0]


def inverse_dynamics(
    env: Environment, s_t: np.ndarray, s_next: np.ndarray, cfg: IDConfig | None = None
) -> IDResult:
    """
    Find an action a minimizing ‖s_next − f(s_t, a)‖.

    Non-convergence is reported through `converged`, never raised.

    Args:
        env: Environment
        s_t: Current state
        s_next: Target next state
        cfg: Solver configuration

    Returns:
        IDResult; `residual` is recomputed from the returned action
    """
    cfg = cfg or IDConfig()
    s = np.asarray(s_t, dtype=np.float64).reshape(-1)
    target = np.asarray(s_next, dtype=np.float64).reshape(-1)
    if s.shape[0] != env.spec.n_states or target.shape[0] != env.spec.n_states:
        raise RejectedInputError("inverse dynamics states have the wrong dimension")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(target))):
        raise RejectedInputError("inverse dynamics inputs must be finite")
    eps = cfg.tolerance(env.is_linear)

    history: list[float] = []
    if cfg.method == IDMethod.ANALYTIC_LINEAR:
        action = _analytic_linear(env, s, target)
    elif cfg.method == IDMethod.BLACKBOX:
        start, _ = env.clamp_action((env.action_low + env.action_high) / 2.0)
        action, history = _blackbox(env, s, target, start, cfg, eps)
    else:
        action, history = _polytopic(env, s, target, cfg, eps)
        if cfg.method == IDMethod.COMBINED and history[-1] > eps:
            action, refined = _blackbox(env, s, target, action, cfg, eps)
            history.extend(refined[1:])

    next_state, _ = step_checked(env, s, action)
    residual = float(np.linalg.norm(target - next_state))
    return IDResult(
        action=action,
        next_state=next_state,
        residual=residual,
        iterations=max(len(history) - 1, 0),
        converged=residual <= eps,
        history=tuple(history),
    )


def id_trajectory(env: Environment, trajectory: Trajectory, cfg: IDConfig | None = None) -> AdmissibilityReport:
    """
    Autoregressive trajectory inverse dynamics.

    Starting from states[0], each step recovers an action toward the next
    predicted state and re-bases on the simulator successor. When the
    trajectory carries an action that reproduces the prediction
    bit-exactly the solver is skipped and SAE is zero.

    Returns:
        AdmissibilityReport with per-step SAE and the chain CAE
    """
    cfg = cfg or IDConfig()
    if trajectory.states.shape[0] < 2:
        raise RejectedInputError("trajectory inverse dynamics needs at least two states")
    eps = cfg.tolerance(env.is_linear)
    s = trajectory.states[0]
    sae: list[float] = []
    actions: list[list[float]] = []
    iterations: list[int] = []
    converged: list[bool] = []
    known: list[bool] = []
    for t in range(trajectory.horizon):
        target = trajectory.states[t + 1]
        if trajectory.actions is not None:
            replay, _ = step_checked(env, s, trajectory.actions[t])
            if np.array_equal(replay, target):
                sae.append(0.0)
                actions.append(env.clamp_action(trajectory.actions[t])[0].tolist())
                iterations.append(0)
                converged.append(True)
                known.append(True)
                s = replay
                continue
        result = inverse_dynamics(env, s, target, cfg)
        sae.append(result.residual)
        actions.append(result.action.tolist())
        iterations.append(result.iterations)
        converged.append(result.converged)
        known.append(False)
        s = result.next_state

    cae = float(np.linalg.norm(np.asarray(sae)))
    n_bad = converged.count(False)
    if n_bad:
        logger.warning("Inverse dynamics did not converge", env=env.name, steps=n_bad, tolerance=eps)
    return AdmissibilityReport(
        env=env.name,
        sae=sae,
        cae=cae,
        actions=actions,
        iterations=iterations,
        converged=converged,
        known_action=known,
        tolerance=eps,
    )


def save_report(path: Path, report: AdmissibilityReport) -> Path:
    """Write a report as a JSON document."""
    return write_json(path, report.model_dump(mode="json"))
