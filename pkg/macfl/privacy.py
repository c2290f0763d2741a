"""Gaussian-mechanism accounting for over-the-air and orthogonal exchange."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelConfig, PowerAllocation


class PrivacyError(ValueError):
    """Invalid privacy inputs or an unreachable privacy target."""


@dataclass(frozen=True)
class PrivacyParams:
    epsilon_target: Optional[float]
    delta: float
    sigma: float
    g_max: float

    def __post_init__(self) -> None:
        if self.epsilon_target is not None and not self.epsilon_target > 0:
            raise PrivacyError(f"epsilon_target must be > 0, got {self.epsilon_target}")
        if not 0 < self.delta < 1:
            raise PrivacyError(f"delta must lie in (0,1), got {self.delta}")
        if not self.sigma >= 0:
            raise PrivacyError(f"sigma must be >= 0, got {self.sigma}")
        if not self.g_max > 0:
            raise PrivacyError(f"g_max must be > 0, got {self.g_max}")

    @property
    def in_proven_regime(self) -> bool:
        """The Gaussian-mechanism threshold is only proven for ε in (0,1)."""

        return self.epsilon_target is not None and 0 < self.epsilon_target < 1


def gaussian_multiplier(delta: float) -> float:
    """sqrt(2 ln(1.25/δ))."""

    if not 0 < delta < 1:
        raise PrivacyError(f"delta must lie in (0,1), got {delta}")
    return math.sqrt(2.0 * math.log(1.25 / delta))


def l2_sensitivity(c: float, gamma: float, g_max: float) -> float:
    """Sensitivity of the aligned aggregate to one worker's dataset, 2·c·γ·g_max."""

    for name, value in (("c", c), ("gamma", gamma), ("g_max", g_max)):
        if not value > 0:
            raise PrivacyError(f"{name} must be > 0, got {value}")
    return 2.0 * c * gamma * g_max


def _sensitivity(c: float, gamma: float, g_max: float) -> float:
    # γ = 0 is a legal zero-sensitivity query for the accountant
    if gamma < 0:
        raise PrivacyError(f"gamma must be >= 0, got {gamma}")
    if gamma == 0:
        return 0.0
    return l2_sensitivity(c, gamma, g_max)


def _senders(config: ChannelConfig, receiver: Optional[int]) -> list:
    if receiver is None:
        return list(range(config.n_workers))
    if not 0 <= receiver < config.n_workers:
        raise PrivacyError(f"receiver {receiver} out of range for {config.n_workers} workers")
    return [k for k in range(config.n_workers) if k != receiver]


def _noise_power(config: ChannelConfig, alloc: PowerAllocation, receiver: Optional[int]) -> float:
    """Σ_{k≠i} |h_k|²·β_k·P_k, the privacy-noise power per unit σ²."""

    return math.fsum(
        config.gains[k] ** 2 * alloc.beta[k] * config.max_power[k] for k in _senders(config, receiver)
    )


def epsilon_dwfl(
    config: ChannelConfig,
    alloc: PowerAllocation,
    priv: PrivacyParams,
    gamma: float,
    g_max: Optional[float] = None,
    receiver: Optional[int] = 0,
) -> float:
    """Per-round ε of the aggregate heard by ``receiver``.

    ε_i = 2γ·g_max·c / sqrt(σ_s²) · sqrt(2 ln(1.25/δ)) with
    σ_s² = Σ_{k≠i}|h_k|²β_kP_kσ² + σ_m². ``receiver=None`` accounts for an
    external server that hears all N workers.
    """

    g_max = priv.g_max if g_max is None else g_max
    variance = _noise_power(config, alloc, receiver) * priv.sigma**2 + config.channel_noise_std**2
    if not variance > 0:
        raise PrivacyError(f"zero total noise variance at receiver {receiver}: no privacy is possible")
    sensitivity = _sensitivity(alloc.c, gamma, g_max)
    return sensitivity / math.sqrt(variance) * gaussian_multiplier(priv.delta)


def epsilon_upper_bound(
    config: ChannelConfig,
    alloc: PowerAllocation,
    priv: PrivacyParams,
    gamma: float,
    g_max: Optional[float] = None,
    receiver: int = 0,
) -> float:
    """The 1/sqrt(N−1) envelope of epsilon_dwfl using the weakest noisy sender.

    (1/sqrt(N−1))·Δ·a / sqrt(min_{k≠i}|h_k|²β_kP_kσ² + σ_m²/(N−1)); tight for
    homogeneous workers.
    """

    g_max = priv.g_max if g_max is None else g_max
    senders = _senders(config, receiver)
    n_senders = len(senders)
    weakest = min(config.gains[k] ** 2 * alloc.beta[k] * config.max_power[k] for k in senders)
    variance = weakest * priv.sigma**2 + config.channel_noise_std**2 / n_senders
    if not variance > 0:
        raise PrivacyError(f"zero noise variance for the weakest sender at receiver {receiver}")
    sensitivity = _sensitivity(alloc.c, gamma, g_max)
    return sensitivity / math.sqrt(n_senders * variance) * gaussian_multiplier(priv.delta)


def epsilon_orthogonal(
    gain: float,
    power: float,
    beta: float,
    priv: PrivacyParams,
    gamma: float,
    g_max: Optional[float] = None,
    channel_noise_std: float = 0.0,
) -> float:
    """Per-link ε of an orthogonal j→i transmission; has no N term."""

    g_max = priv.g_max if g_max is None else g_max
    variance = gain**2 * beta * power * priv.sigma**2 + channel_noise_std**2
    if not variance > 0:
        raise PrivacyError("zero noise variance on the orthogonal link")
    sensitivity = _sensitivity(math.sqrt(gain**2 * power), gamma, g_max)
    return sensitivity / math.sqrt(variance) * gaussian_multiplier(priv.delta)


def _invert(
    target: float,
    sensitivity: float,
    delta: float,
    noise_power: float,
    channel_noise_std: float,
) -> float:
    if not target > 0:
        raise PrivacyError(f"target epsilon must be > 0, got {target}")
    required = (sensitivity * gaussian_multiplier(delta) / target) ** 2
    channel_var = channel_noise_std**2
    if channel_var >= required:
        return 0.0
    if not noise_power > 0:
        raise PrivacyError(
            f"target epsilon {target} is infeasible: no worker spends power on privacy noise "
            f"and channel noise alone gives variance {channel_var} < required {required}"
        )
    return math.sqrt((required - channel_var) / noise_power)


def calibrate_sigma(
    target: float,
    config: ChannelConfig,
    alloc: PowerAllocation,
    gamma: float,
    g_max: float,
    delta: float,
    receiver: Optional[int] = 0,
) -> float:
    """Smallest σ >= 0 with epsilon_dwfl(...) <= target at ``receiver``."""

    sensitivity = _sensitivity(alloc.c, gamma, g_max)
    return _invert(target, sensitivity, delta, _noise_power(config, alloc, receiver), config.channel_noise_std)


def calibrate_sigma_orthogonal(
    target: float,
    gain: float,
    power: float,
    beta: float,
    gamma: float,
    g_max: float,
    delta: float,
    channel_noise_std: float = 0.0,
) -> float:
    """Smallest σ >= 0 with epsilon_orthogonal(...) <= target on one link."""

    sensitivity = _sensitivity(math.sqrt(gain**2 * power), gamma, g_max)
    return _invert(target, sensitivity, delta, gain**2 * beta * power, channel_noise_std)


def clip_gradient(g: np.ndarray, g_max: float) -> np.ndarray:
    """Scale g onto the g_max ball; vectors already inside are returned as-is."""

    if not g_max > 0:
        raise PrivacyError(f"g_max must be > 0, got {g_max}")
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    if norm <= g_max:
        return g.copy()
    return g * (g_max / norm)


def naive_composition(epsilon_round: float, rounds: int) -> float:
    """Linear composition T·ε; an upper bound, not a tight accountant."""

    if rounds < 0:
        raise PrivacyError(f"rounds must be >= 0, got {rounds}")
    return epsilon_round * rounds
