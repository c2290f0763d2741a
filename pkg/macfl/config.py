"""Experiment configuration: validation, JSON loading and setup resolution."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .channel import ChannelConfig, ChannelError, PowerAllocation, compute_alignment, dbm_to_watts
from .learn import (
    Task,
    TaskError,
    build_task,
    load_dataset_csv,
    make_logistic_dataset,
    make_quadratic_dataset,
    partition_data,
)
from .privacy import PrivacyError, PrivacyParams, calibrate_sigma, calibrate_sigma_orthogonal
from .seeding import Streams

_LOGGER = logging.getLogger("macfl.config")

DEFAULT_EPSILON = 0.5
DEFAULT_POWER_DBM = 60.0


class ConfigError(ValueError):
    """The experiment configuration is malformed, contradictory or infeasible."""


PerWorker = Union[float, List[float]]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scheme: Literal["dwfl", "orthogonal", "centralized"] = Field(
        default="dwfl",
        description="Exchange scheme: over-the-air dwfl, orthogonal links, or centralized server.",
    )
    workers: int = Field(default=10, ge=2, description="Number of workers N.")
    rounds: int = Field(default=200, ge=0, description="Number of rounds T.")
    gamma: float = Field(default=0.05, gt=0, description="Gradient step size.")
    eta: float = Field(default=0.5, gt=0, le=1, description="Averaging rate.")
    power_dbm: PerWorker = Field(
        default=DEFAULT_POWER_DBM,
        description="Per-worker max transmit power in dBm (scalar is broadcast).",
    )
    gains: PerWorker = Field(default=1.0, description="Per-worker channel magnitude |h_k| (scalar is broadcast).")
    phases: PerWorker = Field(default=0.0, description="Per-worker channel phase in radians (cancelled by precoding).")
    channel_noise_std: float = Field(default=1.0, ge=0, description="Receiver noise std sigma_m.")
    epsilon: Optional[float] = Field(
        default=None,
        gt=0,
        description="Per-round privacy target; sigma is calibrated from it. Defaults to 0.5 when sigma is unset.",
    )
    delta: float = Field(default=1e-5, gt=0, lt=1, description="Privacy delta.")
    sigma: Optional[float] = Field(default=None, ge=0, description="Privacy noise std (instead of epsilon).")
    g_max: float = Field(default=1.0, gt=0, description="Gradient clipping bound.")
    beta: PerWorker = Field(default=0.5, description="Per-worker power fraction spent on privacy noise, in [0,1).")
    task: Literal["quadratic", "logistic"] = Field(default="quadratic", description="Learning task kind.")
    dimension: int = Field(default=10, ge=1, description="Model dimension for synthetic tasks.")
    dataset: Optional[str] = Field(default=None, description="CSV dataset path (features then label, with header).")
    samples_per_worker: int = Field(default=50, ge=1, description="Synthetic samples per worker.")
    heterogeneity: float = Field(default=1.0, ge=0, description="Spread of synthetic quadratic cluster centers.")
    spread: float = Field(default=1.0, ge=0, description="Within-cluster spread of synthetic quadratic targets.")
    offset: float = Field(default=0.0, description="Shift of every synthetic quadratic target along the ones vector.")
    curvature: float = Field(default=1.0, gt=0, description="Quadratic loss curvature (its Lipschitz constant).")
    regularization: float = Field(default=0.0, ge=0, description="Logistic L2 regularization.")
    batch_size: int = Field(default=1, ge=1, description="Samples per stochastic gradient.")
    partition: Literal["iid", "shards"] = Field(default="iid", description="Data partition mode.")
    init: Literal["zeros", "gaussian"] = Field(default="zeros", description="Parameter initialization.")
    init_scale: float = Field(default=1.0, ge=0, description="Std of gaussian initialization.")
    server_outage_round: Optional[int] = Field(
        default=None,
        ge=0,
        description="Centralized scheme: the server fails from this round on.",
    )
    seed: int = Field(default=0, ge=0, description="Master seed.")
    data_seed: Optional[int] = Field(
        default=None,
        ge=0,
        description="Seed for synthetic data and partitioning; defaults to seed.",
    )
    out: str = Field(default="results/metrics.csv", description="Metrics CSV output path.")

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        if self.epsilon is not None and self.sigma is not None:
            raise ValueError("specify one of epsilon/sigma")
        if self.epsilon is None and self.sigma is None:
            self.epsilon = DEFAULT_EPSILON
        for name in ("power_dbm", "gains", "phases", "beta"):
            value = getattr(self, name)
            if isinstance(value, list) and len(value) not in (1, self.workers):
                raise ValueError(f"{name} has {len(value)} entries; expected 1 or workers={self.workers}")
        if any(not 0 <= b < 1 for b in self.beta_values()):
            raise ValueError(f"beta entries must lie in [0,1), got {self.beta_values()}")
        if any(not g > 0 for g in self.gain_values()):
            raise ValueError(f"gains must be > 0, got {self.gain_values()}")
        return self

    def _per_worker(self, name: str) -> Tuple[float, ...]:
        value = getattr(self, name)
        if isinstance(value, list):
            values = value * self.workers if len(value) == 1 else value
        else:
            values = [value] * self.workers
        return tuple(float(v) for v in values)

    def power_watts(self) -> Tuple[float, ...]:
        return tuple(float(dbm_to_watts(p)) for p in self._per_worker("power_dbm"))

    def gain_values(self) -> Tuple[float, ...]:
        return self._per_worker("gains")

    def phase_values(self) -> Tuple[float, ...]:
        return self._per_worker("phases")

    def beta_values(self) -> Tuple[float, ...]:
        return self._per_worker("beta")


@dataclass(frozen=True)
class ExperimentSetup:
    """Derived objects for one configuration."""

    channel: ChannelConfig
    alloc: PowerAllocation
    privacy: PrivacyParams
    task: Task


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        field = ".".join(str(item) for item in error.get("loc", ())) or "config"
        message = error.get("msg", "invalid value")
        parts.append(f"{field}: {message}")
    return "; ".join(parts)


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError(f"Config file not found: {file_path}")
    try:
        payload = json.loads(file_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Invalid JSON config: {file_path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"Config must be a JSON object: {file_path}")
    return payload


def build_config(values: Mapping[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig(**values)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from exc


def parse_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """Merge a JSON file with flag overrides (flags win) and validate.

    Derived quantities (watts, alignment, calibrated sigma, task) are
    resolved once so infeasible configurations fail here.
    """

    values: Dict[str, Any] = load_config_file(path) if path else {}
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    config = build_config(values)
    resolve_setup(config)
    return config


def serialize_config(config: ExperimentConfig) -> str:
    return json.dumps(config.model_dump(), indent=2, sort_keys=True)


def calibrated_sigma(
    config: ExperimentConfig,
    channel: ChannelConfig,
    alloc: PowerAllocation,
    scheme: Optional[str] = None,
) -> float:
    """Smallest σ meeting the ε target on every exchange of ``scheme``."""

    scheme = config.scheme if scheme is None else scheme
    target = config.epsilon
    if target is None:
        raise ConfigError("epsilon: a target is needed to calibrate sigma")
    if scheme == "dwfl":
        return max(
            calibrate_sigma(target, channel, alloc, config.gamma, config.g_max, config.delta, receiver=i)
            for i in range(channel.n_workers)
        )
    if scheme == "orthogonal":
        return max(
            calibrate_sigma_orthogonal(
                target,
                channel.gains[j],
                channel.max_power[j],
                alloc.beta[j],
                config.gamma,
                config.g_max,
                config.delta,
                channel.channel_noise_std,
            )
            for j in range(channel.n_workers)
        )
    return calibrate_sigma(target, channel, alloc, config.gamma, config.g_max, config.delta, receiver=None)


def build_experiment_task(config: ExperimentConfig) -> Task:
    streams = Streams(config.seed if config.data_seed is None else config.data_seed)
    if config.dataset:
        dataset = load_dataset_csv(config.dataset)
        if dataset.features.shape[1] != config.dimension:
            _LOGGER.info(
                "dataset dimension overrides config path=%s dimension=%s",
                config.dataset,
                dataset.features.shape[1],
            )
    else:
        n_samples = config.workers * config.samples_per_worker
        if config.task == "quadratic":
            dataset = make_quadratic_dataset(
                n_samples,
                config.dimension,
                n_clusters=config.workers,
                rng=streams.data(),
                heterogeneity=config.heterogeneity,
                spread=config.spread,
                offset=config.offset,
            )
        else:
            dataset = make_logistic_dataset(n_samples, config.dimension, streams.data())
    parts = partition_data(dataset, config.workers, config.partition, seed=streams.partition_seed())
    return build_task(config.task, parts, regularization=config.regularization, curvature=config.curvature)


def resolve_setup(config: ExperimentConfig) -> ExperimentSetup:
    """Channel, alignment, privacy noise and task for ``config``."""

    try:
        channel = ChannelConfig(
            n_workers=config.workers,
            gains=config.gain_values(),
            phases=config.phase_values(),
            max_power=config.power_watts(),
            channel_noise_std=config.channel_noise_std,
        )
        alloc = compute_alignment(channel, config.beta_values())
        sigma = config.sigma if config.sigma is not None else calibrated_sigma(config, channel, alloc)
        privacy = PrivacyParams(
            epsilon_target=config.epsilon,
            delta=config.delta,
            sigma=sigma,
            g_max=config.g_max,
        )
        task = build_experiment_task(config)
    except (ChannelError, PrivacyError, TaskError) as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentSetup(channel=channel, alloc=alloc, privacy=privacy, task=task)
