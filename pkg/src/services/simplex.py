"""
ReachDiff Simplex Solver

Euclidean projection of a point onto the convex hull of m points,

    min_{λ ∈ Δ_m} ‖target − Σ λ_i p_i‖,

solved with Wolfe's minimum-norm-point active-set method on the shifted
points q_i = p_i − target. Every major iteration adds the vertex with the
lowest inner product with the current iterate (lowest index on ties) and
every minor iteration solves the affine minimizer of the active set, so
the result is deterministic and typically exact after a handful of steps.
"""

from dataclasses import dataclass

import numpy as np
import structlog

from src.core.exceptions import RejectedInputError
from src.models.projection import SolverConfig

logger = structlog.get_logger(__name__)

# Active-set weights at or below this are treated as zero
WEIGHT_FLOOR = 1e-12

_DEFAULTS = SolverConfig()


@dataclass(frozen=True, eq=False)
class SimplexSolution:
    """Result of a hull projection."""
    weights: np.ndarray
    projected_point: np.ndarray
    residual: float
    iterations: int
    converged: bool = True


def _affine_minimizer(Q: np.ndarray) -> np.ndarray:
    """Weights μ with Σμ = 1 minimizing ‖μ @ Q‖ (KKT system, least squares)."""
    k = Q.shape[0]
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = Q @ Q.T
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return solution[:k]


def project_to_hull(
    target: np.ndarray,
    points: np.ndarray,
    max_iter: int | None = None,
    tol: float | None = None,
) -> SimplexSolution:
    """
    Project target onto conv(points).

    Args:
        target: Point of dimension d
        points: (m, d) array of hull generators
        max_iter: Major-iteration cap (default: SolverConfig.simplex_max_iter)
        tol: Optimality tolerance on the Frank-Wolfe gap, in distance units (default: SolverConfig.simplex_tol)

    Returns:
        SimplexSolution with simplex weights, the projected point and the residual
    """
    max_iter = _DEFAULTS.simplex_max_iter if max_iter is None else max_iter
    tol = _DEFAULTS.simplex_tol if tol is None else tol
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise RejectedInputError("points must be a non-empty (m, d) array")
    if points.shape[1] != target.shape[0]:
        raise RejectedInputError(
            f"target has dimension {target.shape[0]}, points have {points.shape[1]}"
        )
    if not (np.all(np.isfinite(points)) and np.all(np.isfinite(target))):
        raise RejectedInputError("hull projection inputs must be finite")

    m = points.shape[0]
    if m == 1 or np.all(points == points[0]):
        weights = np.full(m, 1.0 / m)
        point = points[0].copy()
        return SimplexSolution(weights, point, float(np.linalg.norm(target - point)), 0)

    Q = points - target
    sq_norms = np.einsum("ij,ij->i", Q, Q)
    scale = max(1.0, float(sq_norms.max()))
    start = int(np.argmin(sq_norms))
    active = [start]
    weights = np.zeros(m)
    weights[start] = 1.0
    x = Q[start].copy()
    converged = False
    iterations = 0

    while iterations < max_iter:
        iterations += 1
        scores = Q @ x
        j = int(np.argmin(scores))
        gap = float(x @ x - scores[j])
        if gap <= tol * tol * scale or j in active:
            converged = True
            break
        active.append(j)

        # Minor cycle: move toward the affine minimizer, dropping vertices
        for _ in range(len(active)):
            mu = _affine_minimizer(Q[active])
            if np.all(mu > WEIGHT_FLOOR):
                weights[:] = 0.0
                weights[active] = mu
                break
            current = weights[active]
            blocked = mu <= WEIGHT_FLOOR
            denom = current[blocked] - mu[blocked]
            ratios = np.where(denom > 0.0, current[blocked] / np.where(denom > 0.0, denom, 1.0), 0.0)
            theta = float(ratios.min())
            blended = current + theta * (mu - current)
            drop = blended <= WEIGHT_FLOOR
            if not drop.any():
                drop[int(np.argmin(blended))] = True
            weights[:] = 0.0
            weights[active] = np.where(drop, 0.0, blended)
            active = [idx for idx, dropped in zip(active, drop, strict=True) if not dropped]
        x = weights @ Q
        if j not in active:
            # the entering vertex could not be kept; no further descent
            converged = True
            break

    if not converged:
        logger.debug("Simplex projection hit iteration cap", iterations=iterations, m=m)

    weights = np.clip(weights, 0.0, None)
    weights = weights / weights.sum()
    point = weights @ points
    return SimplexSolution(
        weights=weights,
        projected_point=point,
        residual=float(np.linalg.norm(target - point)),
        iterations=iterations,
        converged=converged,
    )
