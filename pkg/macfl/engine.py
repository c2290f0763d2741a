"""Round loops for over-the-air DWFL and its orthogonal and centralized baselines."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .analysis import InfeasibleBoundError, analysis_params_for, consensus_error, convergence_bound
from .channel import ChannelConfig, PowerAllocation, mac_round
from .config import ExperimentConfig, ExperimentSetup, resolve_setup
from .learn import Task, global_grad, global_loss, sample_and_grad
from .privacy import (
    PrivacyError,
    PrivacyParams,
    clip_gradient,
    epsilon_dwfl,
    epsilon_orthogonal,
    naive_composition,
)
from .seeding import Streams

_LOGGER = logging.getLogger("macfl.engine")

SCHEMES = ("dwfl", "orthogonal", "centralized")
INIT_MODES = ("zeros", "gaussian")
ROW_TOL = 1e-12


class EngineError(ValueError):
    """Inconsistent round inputs."""


class ServerOutageError(RuntimeError):
    """The parameter server of the centralized baseline is unavailable."""


@dataclass(frozen=True)
class WorkerState:
    """One worker between rounds.

    ``params`` is x_i^(t−1/2) between rounds and x_i^(t) while a round is in
    flight. ``last_noise`` and ``last_grad`` hold what the worker used in
    its most recent round (for orthogonal links, one noise row per receiver).
    """

    id: int
    params: np.ndarray
    rng: np.random.Generator
    noise_rng: np.random.Generator
    last_noise: Optional[np.ndarray] = None
    last_grad: Optional[np.ndarray] = None


@dataclass(frozen=True)
class MixingSpec:
    n: int
    eta: float
    W: np.ndarray
    Psi: np.ndarray


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    global_loss: float
    global_grad_norm_sq: float
    consensus_error: float
    epsilon_round: float
    epsilon_naive_total: float = math.nan
    theory_bound: float = math.nan


def mixing_spec(n: int, eta: float) -> MixingSpec:
    """W = ((1)_N − I)/(N−1) and Ψ = (1−η)I + ηW."""

    if n < 2:
        raise EngineError(f"mixing needs at least 2 workers, got {n}")
    _check_eta(eta)
    W = (np.ones((n, n)) - np.eye(n)) / (n - 1)
    Psi = (1 - eta) * np.eye(n) + eta * W
    for name, matrix in (("W", W), ("Psi", Psi)):
        if not (np.allclose(matrix.sum(axis=0), 1.0, atol=ROW_TOL) and np.allclose(matrix.sum(axis=1), 1.0, atol=ROW_TOL)):
            raise EngineError(f"{name} is not doubly stochastic")
    return MixingSpec(n=n, eta=eta, W=W, Psi=Psi)


def init_workers(
    n: int,
    dimension: int,
    streams: Streams,
    init: str = "zeros",
    init_scale: float = 1.0,
) -> List[WorkerState]:
    if init not in INIT_MODES:
        raise EngineError(f"unknown init {init!r}; expected one of {INIT_MODES}")
    states = []
    for i in range(n):
        if init == "zeros":
            params = np.zeros(dimension)
        else:
            params = streams.init(i).normal(0.0, init_scale, size=dimension)
        states.append(WorkerState(id=i, params=params, rng=streams.sample(i), noise_rng=streams.noise(i)))
    return states


def _check_eta(eta: float) -> None:
    if not 0 < eta <= 1:
        raise EngineError(f"eta must lie in (0,1], got {eta}")


def _check_states(states: Sequence[WorkerState], config: ChannelConfig, task: Task) -> None:
    if len(states) < 2:
        raise EngineError(f"a round needs at least 2 workers, got {len(states)}")
    if len(states) != config.n_workers:
        raise EngineError(f"{len(states)} worker states for a {config.n_workers}-worker channel")
    for index, state in enumerate(states):
        if state.id != index:
            raise EngineError(f"worker states must be ordered by id; position {index} holds {state.id}")
        if state.params.shape != (task.dimension,):
            raise EngineError(f"worker {state.id} params shape {state.params.shape} != ({task.dimension},)")


def _stack(states: Sequence[WorkerState]) -> np.ndarray:
    return np.stack([state.params for state in states], axis=1)


def _metrics(round_index: int, X: np.ndarray, task: Task, epsilon_round: float) -> RoundMetrics:
    average = X.mean(axis=1)
    grad = global_grad(task, average)
    return RoundMetrics(
        round=round_index,
        global_loss=global_loss(task, average),
        global_grad_norm_sq=float(grad @ grad),
        consensus_error=consensus_error(X),
        epsilon_round=epsilon_round,
    )


def _guarded(compute: Callable[[], float]) -> float:
    # a noiseless exchange has no finite privacy guarantee
    try:
        return compute()
    except PrivacyError:
        return math.inf


def _orthogonal_epsilon(
    config: ChannelConfig,
    beta: Sequence[float],
    priv: PrivacyParams,
    gamma: float,
) -> float:
    return max(
        _guarded(
            lambda j=j: epsilon_orthogonal(
                config.gains[j],
                config.max_power[j],
                beta[j],
                priv,
                gamma,
                channel_noise_std=config.channel_noise_std,
            )
        )
        for j in range(config.n_workers)
    )


def scheme_epsilon(
    scheme: str,
    config: ChannelConfig,
    alloc: PowerAllocation,
    priv: PrivacyParams,
    gamma: float,
) -> float:
    """Worst per-round ε over receivers (dwfl), links (orthogonal) or the server."""

    if scheme == "dwfl":
        return max(
            _guarded(lambda i=i: epsilon_dwfl(config, alloc, priv, gamma, receiver=i))
            for i in range(config.n_workers)
        )
    if scheme == "orthogonal":
        return _orthogonal_epsilon(config, alloc.beta, priv, gamma)
    if scheme == "centralized":
        return _guarded(lambda: epsilon_dwfl(config, alloc, priv, gamma, receiver=None))
    raise EngineError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def _local_step(
    state: WorkerState,
    gamma: float,
    priv: PrivacyParams,
    task: Task,
    batch_size: int,
) -> WorkerState:
    grad = clip_gradient(sample_and_grad(task, state.id, state.params, state.rng, batch_size), priv.g_max)
    return replace(state, params=state.params - gamma * grad, last_grad=grad)


def _privacy_draw(state: WorkerState, sigma: float, dimension: int) -> np.ndarray:
    if sigma > 0:
        return state.noise_rng.normal(0.0, sigma, size=dimension)
    return np.zeros(dimension)


def generate_signal(
    state: WorkerState,
    gamma: float,
    config: ChannelConfig,
    alloc: PowerAllocation,
    priv: PrivacyParams,
    task: Task,
    batch_size: int = 1,
    noise: Optional[np.ndarray] = None,
) -> Tuple[WorkerState, np.ndarray]:
    """Gradient step then perturbed transmission.

    Returns the worker holding x_i^(t) = x_i^(t−1/2) − γ·clip(g_i) and the
    baseband signal x̃_i = sqrt(α_iP_i)·x_i^(t) + sqrt(β_iP_i)·𝒢_i.
    """

    stepped = _local_step(state, gamma, priv, task, batch_size)
    draw = _privacy_draw(stepped, priv.sigma, task.dimension) if noise is None else np.asarray(noise, dtype=float)
    power = config.max_power[state.id]
    signal = math.sqrt(alloc.alpha[state.id] * power) * stepped.params + math.sqrt(alloc.beta[state.id] * power) * draw
    return replace(stepped, last_noise=draw), signal


def dwfl_round(
    states: Sequence[WorkerState],
    config: ChannelConfig,
    alloc: PowerAllocation,
    priv: PrivacyParams,
    gamma: float,
    eta: float,
    task: Task,
    streams: Streams,
    round_index: int = 0,
    batch_size: int = 1,
    epsilon_round: Optional[float] = None,
    privacy_noise: Optional[Mapping[int, np.ndarray]] = None,
    channel_noise: Optional[Mapping[int, np.ndarray]] = None,
) -> Tuple[List[WorkerState], RoundMetrics]:
    """One round of over-the-air decentralized learning.

    Every worker transmits over one shared MAC use; receiver i hears
    v_i = c·Σ_{k≠i}(x_k + Φ_k) + m_i and updates
    x_i ← x_i + (η/c)·(v_i/(N−1) − c·(x_i + Φ_i)), where Φ_i is its own
    de-scaled privacy noise. Metrics describe the state entering the round.
    """

    _check_eta(eta)
    _check_states(states, config, task)
    if epsilon_round is None:
        epsilon_round = scheme_epsilon("dwfl", config, alloc, priv, gamma)
    metrics = _metrics(round_index, _stack(states), task, epsilon_round)
    n = len(states)

    staged: List[WorkerState] = []
    signals = {}
    for state in states:
        pinned = None if privacy_noise is None else privacy_noise[state.id]
        sent, signals[state.id] = generate_signal(state, gamma, config, alloc, priv, task, batch_size, noise=pinned)
        staged.append(sent)

    updated = []
    for state in staged:
        i = state.id
        rng = streams.channel(round_index, i) if config.channel_noise_std > 0 else None
        received = mac_round(
            {k: signal for k, signal in signals.items() if k != i},
            i,
            config,
            rng,
            noise=None if channel_noise is None else channel_noise[i],
        )
        own = config.gains[i] * math.sqrt(alloc.beta[i] * config.max_power[i]) * state.last_noise / alloc.c
        params = state.params + (eta / alloc.c) * (received.value / (n - 1) - alloc.c * (state.params + own))
        updated.append(replace(state, params=params))

    _LOGGER.debug(
        "round complete scheme=dwfl t=%s loss=%s consensus=%s",
        round_index,
        metrics.global_loss,
        metrics.consensus_error,
    )
    return updated, metrics


def matrix_round_oracle(
    X: np.ndarray,
    G: np.ndarray,
    Phi: np.ndarray,
    gamma: float,
    mixing: MixingSpec,
) -> np.ndarray:
    """Global form of the dwfl update: (X − γG)·Ψ + Φ·(Ψ − I)."""

    X, G, Phi = (np.asarray(m, dtype=float) for m in (X, G, Phi))
    if not (X.shape == G.shape == Phi.shape):
        raise EngineError(f"shape mismatch X={X.shape} G={G.shape} Phi={Phi.shape}")
    if X.ndim != 2 or X.shape[1] != mixing.n:
        raise EngineError(f"expected d x {mixing.n} matrices, got {X.shape}")
    return (X - gamma * G) @ mixing.Psi + Phi @ (mixing.Psi - np.eye(mixing.n))


def orthogonal_round(
    states: Sequence[WorkerState],
    config: ChannelConfig,
    beta: Sequence[float],
    priv: PrivacyParams,
    gamma: float,
    eta: float,
    task: Task,
    streams: Streams,
    round_index: int = 0,
    batch_size: int = 1,
    epsilon_round: Optional[float] = None,
    privacy_noise: Optional[Mapping[Tuple[int, int], np.ndarray]] = None,
    channel_noise: Optional[Mapping[Tuple[int, int], np.ndarray]] = None,
) -> Tuple[List[WorkerState], RoundMetrics]:
    """One round where every ordered pair j→i uses its own link.

    Sender j spends α_j = 1 − β_j on the model and draws fresh privacy
    noise per link; receiver i de-scales each link by |h_j|·sqrt(α_jP_j),
    averages the N−1 estimates and takes the same η step. Pinned noise is
    keyed by (sender, receiver).
    """

    _check_eta(eta)
    _check_states(states, config, task)
    beta_arr = np.asarray(beta, dtype=float)
    if beta_arr.shape != (config.n_workers,) or np.any(beta_arr < 0) or np.any(beta_arr >= 1):
        raise EngineError(f"beta must hold {config.n_workers} entries in [0,1), got {list(beta)}")
    if epsilon_round is None:
        epsilon_round = _orthogonal_epsilon(config, beta_arr, priv, gamma)
    metrics = _metrics(round_index, _stack(states), task, epsilon_round)
    n = len(states)
    d = task.dimension

    staged = [_local_step(state, gamma, priv, task, batch_size) for state in states]
    estimates = {i: [] for i in range(n)}
    sent_states = []
    for state in staged:
        j = state.id
        power = config.max_power[j]
        link_gain = config.gains[j] * math.sqrt((1.0 - beta_arr[j]) * power)
        noise_gain = config.gains[j] * math.sqrt(beta_arr[j] * power)
        draws = []
        for i in range(n):
            if i == j:
                continue
            if privacy_noise is not None:
                draw = np.asarray(privacy_noise[(j, i)], dtype=float)
            else:
                draw = _privacy_draw(state, priv.sigma, d)
            if channel_noise is not None:
                link_noise = np.asarray(channel_noise[(j, i)], dtype=float)
            elif config.channel_noise_std > 0:
                link_noise = streams.link(round_index, j, i).normal(0.0, config.channel_noise_std, size=d)
            else:
                link_noise = np.zeros(d)
            received = link_gain * state.params + noise_gain * draw + link_noise
            estimates[i].append(received / link_gain)
            draws.append(draw)
        sent_states.append(replace(state, last_noise=np.stack(draws)))

    updated = []
    for state in sent_states:
        average = np.mean(estimates[state.id], axis=0)
        updated.append(replace(state, params=state.params + eta * (average - state.params)))

    _LOGGER.debug(
        "round complete scheme=orthogonal t=%s loss=%s consensus=%s",
        round_index,
        metrics.global_loss,
        metrics.consensus_error,
    )
    return updated, metrics


def centralized_round(
    states: Sequence[WorkerState],
    config: ChannelConfig,
    alloc: PowerAllocation,
    priv: PrivacyParams,
    gamma: float,
    task: Task,
    streams: Streams,
    round_index: int = 0,
    batch_size: int = 1,
    epsilon_round: Optional[float] = None,
    server_available: bool = True,
    privacy_noise: Optional[Mapping[int, np.ndarray]] = None,
    channel_noise: Optional[np.ndarray] = None,
) -> Tuple[List[WorkerState], RoundMetrics]:
    """One MAC use to a parameter server, then a noiseless broadcast of v/(cN)."""

    _check_states(states, config, task)
    if not server_available:
        raise ServerOutageError(f"parameter server unavailable at round {round_index}")
    if epsilon_round is None:
        epsilon_round = scheme_epsilon("centralized", config, alloc, priv, gamma)
    metrics = _metrics(round_index, _stack(states), task, epsilon_round)
    n = len(states)

    staged = []
    signals = {}
    for state in states:
        pinned = None if privacy_noise is None else privacy_noise[state.id]
        sent, signals[state.id] = generate_signal(state, gamma, config, alloc, priv, task, batch_size, noise=pinned)
        staged.append(sent)

    rng = streams.server(round_index) if config.channel_noise_std > 0 else None
    received = mac_round(signals, None, config, rng, noise=channel_noise)
    broadcast = received.value / (alloc.c * n)
    updated = [replace(state, params=broadcast.copy()) for state in staged]

    _LOGGER.debug("round complete scheme=centralized t=%s loss=%s", round_index, metrics.global_loss)
    return updated, metrics


def _theory_bound(setup: ExperimentSetup, config: ExperimentConfig, start: np.ndarray) -> float:
    if setup.task.kind != "quadratic" or config.rounds < 1:
        return math.nan
    params = analysis_params_for(
        setup.task,
        setup.channel,
        setup.alloc,
        setup.privacy.sigma,
        config.rounds,
        start=start,
        batch_size=config.batch_size,
    )
    try:
        return convergence_bound(params, config.gamma)
    except InfeasibleBoundError as exc:
        _LOGGER.info("theory bound unavailable reason=%s", "; ".join(exc.violations))
        return math.nan


def run_experiment(config: ExperimentConfig, setup: Optional[ExperimentSetup] = None) -> List[RoundMetrics]:
    """Run ``config.rounds`` rounds of the configured scheme from a zero start (or the configured init)."""

    setup = resolve_setup(config) if setup is None else setup
    streams = Streams(config.seed)
    states = init_workers(
        config.workers,
        setup.task.dimension,
        streams,
        init=config.init,
        init_scale=config.init_scale,
    )
    epsilon_round = scheme_epsilon(config.scheme, setup.channel, setup.alloc, setup.privacy, config.gamma)
    bound = _theory_bound(setup, config, _stack(states).mean(axis=1))
    _LOGGER.info(
        "experiment start scheme=%s workers=%s rounds=%s sigma=%s epsilon_round=%s seed=%s",
        config.scheme,
        config.workers,
        config.rounds,
        setup.privacy.sigma,
        epsilon_round,
        config.seed,
    )

    history: List[RoundMetrics] = []
    for t in range(config.rounds):
        if config.scheme == "dwfl":
            states, metrics = dwfl_round(
                states,
                setup.channel,
                setup.alloc,
                setup.privacy,
                config.gamma,
                config.eta,
                setup.task,
                streams,
                round_index=t,
                batch_size=config.batch_size,
                epsilon_round=epsilon_round,
            )
        elif config.scheme == "orthogonal":
            states, metrics = orthogonal_round(
                states,
                setup.channel,
                setup.alloc.beta,
                setup.privacy,
                config.gamma,
                config.eta,
                setup.task,
                streams,
                round_index=t,
                batch_size=config.batch_size,
                epsilon_round=epsilon_round,
            )
        else:
            outage = config.server_outage_round is not None and t >= config.server_outage_round
            states, metrics = centralized_round(
                states,
                setup.channel,
                setup.alloc,
                setup.privacy,
                config.gamma,
                setup.task,
                streams,
                round_index=t,
                batch_size=config.batch_size,
                epsilon_round=epsilon_round,
                server_available=not outage,
            )
        history.append(
            replace(
                metrics,
                epsilon_naive_total=naive_composition(epsilon_round, t + 1),
                theory_bound=bound,
            )
        )

    if history:
        _LOGGER.info(
            "experiment complete scheme=%s final_loss=%s final_grad_norm_sq=%s",
            config.scheme,
            history[-1].global_loss,
            history[-1].global_grad_norm_sq,
        )
    return history
