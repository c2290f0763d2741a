"""Experiment presets, batch runs, metrics CSV output and reports."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from .analysis import InfeasibleBoundError, analysis_params_for, bound_conditions, convergence_bound
from .config import (
    DEFAULT_EPSILON,
    ConfigError,
    ExperimentConfig,
    ExperimentSetup,
    build_config,
    calibrated_sigma,
    resolve_setup,
)
from .engine import RoundMetrics, run_experiment, scheme_epsilon
from .privacy import PrivacyError, epsilon_dwfl, epsilon_orthogonal, epsilon_upper_bound, naive_composition

_LOGGER = logging.getLogger("macfl.harness")

METRICS_HEADER = (
    "round",
    "global_loss",
    "global_grad_norm_sq",
    "consensus_error",
    "epsilon_round",
    "epsilon_naive_total",
    "theory_bound",
)

POWER_SWEEP_DBM = (20.0, 40.0, 60.0, 80.0)
POWER_PANEL_WORKERS = (10, 30)
WORKER_SWEEP = (15, 20, 25, 30)
EPSILON_SWEEP = (0.1, 0.25, 0.5, 1.0)
PRESETS = ("power-sweep", "power-panels", "worker-sweep", "epsilon-sweep", "scheme-compare", "topology-compare")


def _format_value(value: float) -> str:
    return format(float(value), ".17g")


def emit_metrics(metrics: Iterable[RoundMetrics], path: Union[str, Path]) -> Path:
    """Write one CSV row per round under the fixed metrics header."""

    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with out_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for item in metrics:
            writer.writerow(
                [
                    str(int(item.round)),
                    _format_value(item.global_loss),
                    _format_value(item.global_grad_norm_sq),
                    _format_value(item.consensus_error),
                    _format_value(item.epsilon_round),
                    _format_value(item.epsilon_naive_total),
                    _format_value(item.theory_bound),
                ]
            )
            rows += 1
    _LOGGER.info("metrics written path=%s rows=%s", out_path, rows)
    return out_path


def _labelled_out(out: str, preset_name: str, label: str) -> str:
    path = Path(out)
    return str(path.with_name(f"{path.stem}-{preset_name}-{label}{path.suffix}"))


def _as_values(overrides: Union[None, ExperimentConfig, Mapping[str, Any]]) -> Dict[str, Any]:
    if overrides is None:
        return {}
    if isinstance(overrides, ExperimentConfig):
        return overrides.model_dump()
    return dict(overrides)


def _variant(base: ExperimentConfig, preset_name: str, label: str, update: Mapping[str, Any]) -> ExperimentConfig:
    values = base.model_dump()
    values.update(update)
    values["out"] = _labelled_out(base.out, preset_name, label)
    config = build_config(values)
    resolve_setup(config)
    return config


def preset(
    name: str,
    overrides: Union[None, ExperimentConfig, Mapping[str, Any]] = None,
) -> List[ExperimentConfig]:
    """Expand a named sweep over a base config.

    Items differ from the base only in the swept key (plus ``out``). The
    scheme and topology comparisons hold the per-round ε fixed, so a base
    given by σ is converted to its ε target.
    """

    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")
    base = build_config(_as_values(overrides))
    target = base.epsilon if base.epsilon is not None else DEFAULT_EPSILON

    if name == "power-sweep":
        items = [(f"{p:g}dbm", {"power_dbm": p}) for p in POWER_SWEEP_DBM]
    elif name == "power-panels":
        items = [
            (f"n{n}-{p:g}dbm", {"workers": n, "power_dbm": p}) for n in POWER_PANEL_WORKERS for p in POWER_SWEEP_DBM
        ]
    elif name == "worker-sweep":
        items = [(f"n{n}", {"workers": n}) for n in WORKER_SWEEP]
    elif name == "epsilon-sweep":
        items = [(f"eps{e:g}", {"epsilon": e, "sigma": None}) for e in EPSILON_SWEEP]
    elif name == "scheme-compare":
        items = [(s, {"scheme": s, "epsilon": target, "sigma": None}) for s in ("dwfl", "orthogonal")]
    else:
        items = [(s, {"scheme": s, "epsilon": target, "sigma": None}) for s in ("dwfl", "centralized")]
    return [_variant(base, name, label, update) for label, update in items]


def run_and_emit(config: ExperimentConfig) -> List[RoundMetrics]:
    history = run_experiment(config)
    emit_metrics(history, config.out)
    return history


def run_batch(configs: Sequence[ExperimentConfig], max_workers: Optional[int] = None) -> List[List[RoundMetrics]]:
    """Run independent configs across threads; results keep input order."""

    if not configs:
        return []
    workers = max_workers or min(len(configs), 4)
    _LOGGER.info("batch start items=%s threads=%s", len(configs), workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(run_and_emit, configs))
    _LOGGER.info("batch complete items=%s", len(configs))
    return results


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


def _safe(compute) -> float:
    try:
        return compute()
    except PrivacyError:
        return math.inf


def privacy_report(config: ExperimentConfig) -> Dict[str, Any]:
    """Per-round privacy of every exchange the configuration can make.

    Non-finite ε (a noiseless exchange) is reported as null.
    """

    setup = resolve_setup(config)
    channel, alloc, priv = setup.channel, setup.alloc, setup.privacy
    gamma = config.gamma
    n = channel.n_workers
    per_receiver = [_safe(lambda i=i: epsilon_dwfl(channel, alloc, priv, gamma, receiver=i)) for i in range(n)]
    envelope = [_safe(lambda i=i: epsilon_upper_bound(channel, alloc, priv, gamma, receiver=i)) for i in range(n)]
    per_link = [
        _safe(
            lambda j=j: epsilon_orthogonal(
                channel.gains[j],
                channel.max_power[j],
                alloc.beta[j],
                priv,
                gamma,
                channel_noise_std=channel.channel_noise_std,
            )
        )
        for j in range(n)
    ]
    server = _safe(lambda: epsilon_dwfl(channel, alloc, priv, gamma, receiver=None))
    epsilon_round = scheme_epsilon(config.scheme, channel, alloc, priv, gamma)
    report = {
        "scheme": config.scheme,
        "workers": n,
        "sigma": priv.sigma,
        "delta": priv.delta,
        "epsilon_target": priv.epsilon_target,
        "in_proven_regime": priv.in_proven_regime,
        "alignment_c": alloc.c,
        "epsilon_round": _finite_or_none(epsilon_round),
        "epsilon_naive_total": _finite_or_none(naive_composition(epsilon_round, config.rounds)),
        "epsilon_dwfl_per_receiver": [_finite_or_none(e) for e in per_receiver],
        "epsilon_upper_bound_per_receiver": [_finite_or_none(e) for e in envelope],
        "epsilon_orthogonal_per_sender": [_finite_or_none(e) for e in per_link],
        "epsilon_server": _finite_or_none(server),
    }
    if priv.epsilon_target is not None:
        report.update(_injected_variances(config, setup))
    return report


def _injected_variances(config: ExperimentConfig, setup: ExperimentSetup) -> Dict[str, Any]:
    """Worst per-sender injected noise power at the ε target, dwfl vs orthogonal links."""

    channel, alloc = setup.channel, setup.alloc
    try:
        sigma_dwfl = calibrated_sigma(config, channel, alloc, scheme="dwfl")
        sigma_orthogonal = calibrated_sigma(config, channel, alloc, scheme="orthogonal")
    except PrivacyError:
        return {}
    powers = [g**2 * b * p for g, b, p in zip(channel.gains, alloc.beta, channel.max_power)]
    dwfl = max(powers) * sigma_dwfl**2
    orthogonal = max(powers) * sigma_orthogonal**2
    return {
        "injected_variance_dwfl": dwfl,
        "injected_variance_orthogonal": orthogonal,
        "injected_variance_ratio": orthogonal / dwfl if dwfl > 0 else None,
    }


def bound_report(config: ExperimentConfig, seeds: Sequence[int]) -> Dict[str, Any]:
    """Seed-averaged (1/T)·Σ_t ‖∇f(x̄_t)‖² against the convergence bound.

    Data is fixed across seeds (``data_seed`` defaults to the config's seed)
    so only sampling and noise vary.
    """

    if config.task != "quadratic":
        raise ConfigError("bound_report needs the quadratic task")
    if config.rounds < 1:
        raise ConfigError("bound_report needs rounds >= 1")
    if not seeds:
        raise ConfigError("bound_report needs at least one seed")
    if config.init != "zeros":
        raise ConfigError("bound_report needs the zero init; C4 would otherwise vary per seed")
    data_seed = config.seed if config.data_seed is None else config.data_seed
    runs = [config.model_copy(update={"seed": int(s), "data_seed": data_seed}) for s in seeds]

    per_seed = []
    for run in runs:
        history = run_experiment(run)
        per_seed.append(float(np.mean([m.global_grad_norm_sq for m in history])))
    empirical = float(np.mean(per_seed))

    setup = resolve_setup(runs[0])
    params = analysis_params_for(
        setup.task,
        setup.channel,
        setup.alloc,
        setup.privacy.sigma,
        config.rounds,
        batch_size=config.batch_size,
    )
    violations = bound_conditions(params, config.gamma)
    bound: Optional[float] = None
    if not violations:
        try:
            bound = convergence_bound(params, config.gamma)
        except InfeasibleBoundError as exc:
            violations = exc.violations
    _LOGGER.info("bound report seeds=%s empirical=%s bound=%s", len(per_seed), empirical, bound)
    return {
        "rounds": config.rounds,
        "seeds": [int(s) for s in seeds],
        "data_seed": data_seed,
        "empirical_mean": empirical,
        "empirical_per_seed": per_seed,
        "bound": bound,
        "violations": violations,
        "holds": bound is not None and empirical <= bound,
        "constants": {
            "lipschitz": params.lipschitz,
            "sigma_f": params.sigma_f,
            "zeta": params.zeta,
            "c4": params.c4,
            "sigma_z": params.sigma_z,
            "c2": params.c2,
        },
    }


def write_report(report: Mapping[str, Any], path: Union[str, Path]) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    _LOGGER.info("report written path=%s", out_path)
    return out_path
