"""
ReachDiff Sampler Primitives

Noise ladder, first-order deterministic denoising step and the
projection curriculum gate. Everything here works on numpy arrays so it
can be checked exactly against closed-form expectations.
"""

from collections.abc import Callable

import numpy as np

from src.core.exceptions import RejectedInputError
from src.models.diffusion import Curriculum, NoiseSchedule

DenoiseFn = Callable[[np.ndarray, float], np.ndarray]
StepHook = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


def schedule_sigmas(
    steps: int, sigma_first: float = 80.0, sigma_last: float = 0.002, rho: float = 7.0
) -> np.ndarray:
    """
    Power-interpolated noise ladder σ_0 > … > σ_{N−1} followed by σ_N = 0.

    σ_i = (σ_0^{1/ρ} + i/(N−1)·(σ_{N−1}^{1/ρ} − σ_0^{1/ρ}))^ρ; the endpoints are
    set exactly.

    Args:
        steps: Number of denoising steps N (≥ 2)
        sigma_first: Largest noise level σ_0
        sigma_last: Smallest non-zero noise level σ_{N−1}
        rho: Interpolation exponent

    Returns:
        Array of N+1 noise levels
    """
    if steps < 2:
        raise RejectedInputError(f"schedule needs at least 2 steps, got {steps}")
    if sigma_first <= 0.0 or sigma_last <= 0.0:
        raise RejectedInputError("noise levels must be positive")
    if sigma_last >= sigma_first:
        raise RejectedInputError("sigma_last must be smaller than sigma_first")
    if rho <= 0.0:
        raise RejectedInputError("rho must be positive")
    inv_rho = 1.0 / rho
    ramp = np.arange(steps, dtype=np.float64) / (steps - 1)
    sigmas = (sigma_first**inv_rho + ramp * (sigma_last**inv_rho - sigma_first**inv_rho)) ** rho
    sigmas[0] = sigma_first
    sigmas[-1] = sigma_last
    return np.append(sigmas, 0.0)


def schedule_from(schedule: NoiseSchedule) -> np.ndarray:
    return schedule_sigmas(schedule.steps, schedule.sigma_first, schedule.sigma_last, schedule.rho)


def denoise_step(
    denoise_fn: DenoiseFn, tau: np.ndarray, sigma: float, sigma_next: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    One deterministic step: (σ_{i+1}/σ_i)·τ + (1 − σ_{i+1}/σ_i)·D(τ; σ_i).

    Returns:
        Tuple of (next sample, denoiser output)
    """
    if sigma <= 0.0:
        raise RejectedInputError("denoise_step requires sigma > 0")
    if not 0.0 <= sigma_next < sigma:
        raise RejectedInputError(
            f"denoise_step requires sigma > sigma_next >= 0, got {sigma} and {sigma_next}"
        )
    denoised = denoise_fn(tau, sigma)
    ratio = sigma_next / sigma
    return ratio * tau + (1.0 - ratio) * denoised, denoised


def sample_chain(
    denoise_fn: DenoiseFn,
    tau0: np.ndarray,
    sigmas: np.ndarray,
    hook: StepHook | None = None,
) -> np.ndarray:
    """
    Run the full first-order chain over a σ ladder.

    Args:
        denoise_fn: D(τ, σ)
        tau0: Initial noise sample
        sigmas: Ladder ending in 0
        hook: Optional hook(i, next sample, denoiser output) returning the
            sample carried into the next step (pinning, projection)

    Returns:
        Final sample
    """
    tau = np.asarray(tau0, dtype=np.float64)
    for i in range(len(sigmas) - 1):
        tau, denoised = denoise_step(denoise_fn, tau, float(sigmas[i]), float(sigmas[i + 1]))
        if hook is not None:
            tau = hook(i, tau, denoised)
    return tau


def curriculum_gate(
    curriculum: Curriculum, sigma: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Bernoulli projection gates for n transitions at noise level σ.

    Returns:
        Boolean array, True where the transition is projected
        (probability 1 − p(σ))
    """
    if sigma < 0.0:
        raise RejectedInputError("curriculum gate requires sigma >= 0")
    skip = rng.random(n) < curriculum.skip_probability(sigma)
    return ~skip
