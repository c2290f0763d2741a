"""Theoretical quantities reported next to empirical convergence curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .channel import ChannelConfig, PowerAllocation
from .learn import Task, global_loss, quadratic_constants


MAX_LIPSCHITZ = 1.0


class InfeasibleBoundError(ValueError):
    """Preconditions of the convergence bound do not hold."""

    def __init__(self, violations: List[str]) -> None:
        super().__init__("convergence bound infeasible: " + "; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class AnalysisParams:
    lipschitz: float
    sigma_f: float
    zeta: float
    c4: float
    sigma_z: float
    dimension: int
    rounds: int
    n_workers: int

    @property
    def c2(self) -> float:
        return ((self.n_workers - 1) / self.n_workers) ** 2


def sigma_z_squared(
    config: ChannelConfig,
    alloc: PowerAllocation,
    sigma: float,
    n_workers: Optional[int] = None,
) -> float:
    """Effective post-descaling noise variance, maximized over workers.

    σ_z² = max_k |h_k|²β_kP_kσ²/c² + σ_m²/(c²(N−1)²).
    """

    n = config.n_workers if n_workers is None else n_workers
    c_sq = alloc.c**2
    channel_term = config.channel_noise_std**2 / (c_sq * (n - 1) ** 2)
    return max(
        gain**2 * beta * power * sigma**2 / c_sq + channel_term
        for gain, beta, power in zip(config.gains, alloc.beta, config.max_power)
    )


def bound_conditions(params: AnalysisParams, gamma: float) -> List[str]:
    """Return the violated preconditions of the bound; empty when it applies."""

    violations = []
    lip = params.lipschitz
    c2 = params.c2
    if not gamma > 0:
        violations.append(f"gamma={gamma} must be > 0")
    if params.rounds < 1:
        violations.append(f"rounds={params.rounds} must be >= 1")
    if params.n_workers < 2:
        violations.append(f"n_workers={params.n_workers} must be >= 2")
        return violations
    if lip > MAX_LIPSCHITZ:
        violations.append(f"L={lip} must be <= {MAX_LIPSCHITZ}")
    if not 1 - 12 * lip**2 * c2 > 0:
        violations.append(f"1 - 12 L^2 C2 = {1 - 12 * lip**2 * c2:.6g} must be > 0")
    denom = 1 - 6 * c2 * lip**2 * gamma**2
    if not denom > 0:
        violations.append(f"1 - 6 C2 L^2 gamma^2 = {denom:.6g} must be > 0")
    elif not gamma / 2 - 3 * gamma**3 * lip**2 * c2 / denom > 0:
        violations.append("left coefficient gamma/2 - 3 gamma^3 L^2 C2 / (1 - 6 C2 L^2 gamma^2) must be > 0")
    return violations


def convergence_bound(params: AnalysisParams, gamma: float) -> float:
    """Upper bound on (1/T)·Σ_t E‖∇f(x̄_{t−1/2})‖².

    The heterogeneity term enters linearly in ζ, not as ζ².
    """

    violations = bound_conditions(params, gamma)
    if violations:
        raise InfeasibleBoundError(violations)

    lip = params.lipschitz
    c2 = params.c2
    n = params.n_workers
    rounds = params.rounds
    denom = 1 - 6 * c2 * lip**2 * gamma**2
    coefficient = gamma / 2 - 3 * gamma**3 * lip**2 * c2 / denom

    rhs = (
        params.c4
        + (lip * gamma**2 / (2 * n) + c2 * lip**2 * gamma**3 / denom) * params.sigma_f**2 * rounds
        + 3 * gamma**3 * lip**2 * rounds * c2 * params.zeta / denom
        + gamma * lip**2 * params.dimension * rounds * params.sigma_z**2 / denom
    )
    return rhs / (coefficient * rounds)


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise ValueError(f"{name} must be > 0, got {value}")


def tuned_step_size(c4: float, n_workers: int, lipschitz: float, rounds: int, sigma_f: float) -> float:
    """γ = (1/σ_f)·sqrt(2·C₄·N/(L·T))."""

    _require_positive(c4=c4, n_workers=n_workers, lipschitz=lipschitz, rounds=rounds, sigma_f=sigma_f)
    return math.sqrt(2 * c4 * n_workers / (lipschitz * rounds)) / sigma_f


def tuned_rate(
    c4: float,
    n_workers: int,
    lipschitz: float,
    rounds: int,
    sigma_f: float,
    dimension: int,
    epsilon: float,
) -> float:
    """Rate at the tuned step size: 2σ_f·sqrt(2C₄L/(TN)) + 20C₂C₄NLd/(Tσ_f²ε²)."""

    _require_positive(
        c4=c4,
        n_workers=n_workers,
        lipschitz=lipschitz,
        rounds=rounds,
        sigma_f=sigma_f,
        dimension=dimension,
        epsilon=epsilon,
    )
    c2 = ((n_workers - 1) / n_workers) ** 2
    statistical = 2 * sigma_f * math.sqrt(2 * c4 * lipschitz / (rounds * n_workers))
    privacy = 20 * c2 * c4 * n_workers * lipschitz * dimension / (rounds * sigma_f**2 * epsilon**2)
    return statistical + privacy


def consensus_error(X: np.ndarray) -> float:
    """‖X(I − (1/N)_N)‖_F² for a d×N matrix of worker columns."""

    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    centered = X - X.mean(axis=1, keepdims=True)
    return float(np.sum(centered**2))


def analysis_params_for(
    task: Task,
    config: ChannelConfig,
    alloc: PowerAllocation,
    sigma: float,
    rounds: int,
    start: Optional[np.ndarray] = None,
    batch_size: int = 1,
) -> AnalysisParams:
    """Assemble exact constants for a quadratic task started from ``start``."""

    constants = quadratic_constants(task, batch_size=batch_size)
    start = np.zeros(task.dimension) if start is None else np.asarray(start, dtype=float)
    c4 = global_loss(task, start) - constants.f_star
    return AnalysisParams(
        lipschitz=constants.lipschitz,
        sigma_f=constants.sigma_f,
        zeta=constants.zeta,
        c4=max(c4, 0.0),
        sigma_z=math.sqrt(sigma_z_squared(config, alloc, sigma)),
        dimension=task.dimension,
        rounds=rounds,
        n_workers=config.n_workers,
    )
