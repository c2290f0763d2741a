"""Gaussian multiple-access channel with power alignment."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np


ALIGNMENT_RTOL = 1e-12
BUDGET_ATOL = 1e-12


class ChannelError(ValueError):
    """Invalid channel configuration or signal shapes."""


@dataclass(frozen=True)
class ChannelConfig:
    n_workers: int
    gains: Tuple[float, ...]
    phases: Tuple[float, ...]
    max_power: Tuple[float, ...]
    channel_noise_std: float

    def __post_init__(self) -> None:
        if self.n_workers < 2:
            raise ChannelError(f"n_workers must be >= 2, got {self.n_workers}")
        for name in ("gains", "phases", "max_power"):
            values = getattr(self, name)
            if len(values) != self.n_workers:
                raise ChannelError(f"{name} has {len(values)} entries, expected {self.n_workers}")
        if any(not gain > 0 for gain in self.gains):
            raise ChannelError(f"gains must be strictly positive, got {self.gains}")
        if any(not power > 0 for power in self.max_power):
            raise ChannelError(f"max_power must be strictly positive, got {self.max_power}")
        if not self.channel_noise_std >= 0:
            raise ChannelError(f"channel_noise_std must be >= 0, got {self.channel_noise_std}")

    @classmethod
    def homogeneous(
        cls,
        n_workers: int,
        gain: float = 1.0,
        power: float = 1.0,
        channel_noise_std: float = 0.0,
    ) -> "ChannelConfig":
        return cls(
            n_workers=n_workers,
            gains=(float(gain),) * n_workers,
            phases=(0.0,) * n_workers,
            max_power=(float(power),) * n_workers,
            channel_noise_std=float(channel_noise_std),
        )

    @property
    def gain_array(self) -> np.ndarray:
        return np.asarray(self.gains, dtype=float)

    @property
    def power_array(self) -> np.ndarray:
        return np.asarray(self.max_power, dtype=float)


@dataclass(frozen=True)
class PowerAllocation:
    c: float
    alpha: Tuple[float, ...]
    beta: Tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ChannelError(f"alignment constant must be positive, got {self.c}")
        if len(self.alpha) != len(self.beta):
            raise ChannelError("alpha and beta must have one entry per worker")
        for k, (a, b) in enumerate(zip(self.alpha, self.beta)):
            if not (0 <= a <= 1 and 0 <= b <= 1):
                raise ChannelError(f"worker {k}: alpha={a} beta={b} must lie in [0,1]")
            if a + b > 1 + BUDGET_ATOL:
                raise ChannelError(f"worker {k}: alpha+beta={a + b} exceeds the power budget")

    def is_aligned(self, config: ChannelConfig) -> bool:
        """True when every |h_k|·sqrt(α_k·P_k) equals c to ALIGNMENT_RTOL."""

        for gain, alpha, power in zip(config.gains, self.alpha, config.max_power):
            if not math.isclose(gain * math.sqrt(alpha * power), self.c, rel_tol=ALIGNMENT_RTOL):
                return False
        return True


@dataclass(frozen=True)
class ReceivedSignal:
    receiver: Optional[int]
    value: np.ndarray


def dbm_to_watts(dbm):
    """Convert dBm to watts; accepts scalars or arrays."""

    watts = np.power(10.0, (np.asarray(dbm, dtype=float) - 30.0) / 10.0)
    if watts.ndim == 0:
        return float(watts)
    return watts


def compute_alignment(config: ChannelConfig, beta: Sequence[float]) -> PowerAllocation:
    """Align every worker's effective coefficient to a common c.

    c is the smallest amplitude any worker can reach with the power left
    after its privacy-noise share, c = min_j sqrt(|h_j|²(1−β_j)P_j), and
    α_i = c²/(|h_i|²P_i). With residual power the budget α_i+β_i <= 1 holds
    for every worker, including the weakest one.
    """

    if config.n_workers < 2:
        raise ChannelError(f"alignment needs at least 2 workers, got {config.n_workers}")
    beta_arr = np.asarray(beta, dtype=float)
    if beta_arr.shape != (config.n_workers,):
        raise ChannelError(f"beta must have {config.n_workers} entries, got shape {beta_arr.shape}")
    if np.any(beta_arr < 0) or np.any(beta_arr >= 1):
        raise ChannelError(f"beta entries must lie in [0,1), got {beta_arr.tolist()}")

    gains = config.gain_array
    power = config.power_array
    residual = gains**2 * (1.0 - beta_arr) * power
    c = float(np.sqrt(residual.min()))
    alpha = c**2 / (gains**2 * power)
    # the argmin worker may land one ulp above its residual share
    alpha = np.minimum(alpha, 1.0 - beta_arr)
    return PowerAllocation(
        c=c,
        alpha=tuple(float(a) for a in alpha),
        beta=tuple(float(b) for b in beta_arr),
    )


def mac_round(
    signals: Mapping[int, np.ndarray],
    receiver: Optional[int],
    config: ChannelConfig,
    rng: Optional[np.random.Generator],
    noise: Optional[np.ndarray] = None,
) -> ReceivedSignal:
    """Superpose the senders' baseband signals at one receiver.

    v_i = Σ_{k≠i} |h_k|·x̃_k + m_i. Phases are pre-compensated by the
    senders, so only the magnitudes |h_k| appear. Senders are summed in
    ascending index order. ``noise`` pins m_i; otherwise it is drawn from
    ``rng`` when σ_m > 0. ``receiver=None`` is a node outside the worker
    set (a parameter server) that may hear every worker.
    """

    if receiver is not None:
        if not 0 <= receiver < config.n_workers:
            raise ChannelError(f"receiver {receiver} out of range for {config.n_workers} workers")
        if receiver in signals:
            raise ChannelError(f"receiver {receiver} cannot hear its own transmission")
    if not signals:
        raise ChannelError("mac_round needs at least one sender")

    senders = sorted(signals)
    first = np.asarray(signals[senders[0]], dtype=float)
    dim = first.shape
    value = np.zeros(dim, dtype=float)
    for k in senders:
        if not 0 <= k < config.n_workers:
            raise ChannelError(f"sender {k} out of range for {config.n_workers} workers")
        signal = np.asarray(signals[k], dtype=float)
        if signal.shape != dim:
            raise ChannelError(f"sender {k} signal shape {signal.shape} != {dim}")
        value = value + config.gains[k] * signal

    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != dim:
            raise ChannelError(f"pinned noise shape {noise.shape} != {dim}")
        value = value + noise
    elif config.channel_noise_std > 0:
        if rng is None:
            raise ChannelError("channel noise requires an rng stream")
        value = value + rng.normal(0.0, config.channel_noise_std, size=dim)
    return ReceivedSignal(receiver=receiver, value=value)
