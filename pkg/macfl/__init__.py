"""Over-the-air decentralized federated learning simulator."""

from .channel import ChannelConfig, PowerAllocation, compute_alignment, dbm_to_watts, mac_round
from .config import ConfigError, ExperimentConfig, parse_config, resolve_setup
from .engine import RoundMetrics, WorkerState, dwfl_round, run_experiment
from .harness import emit_metrics, preset, run_batch
from .privacy import PrivacyParams, calibrate_sigma, epsilon_dwfl, epsilon_orthogonal

__all__ = [
    "ChannelConfig",
    "ConfigError",
    "ExperimentConfig",
    "PowerAllocation",
    "PrivacyParams",
    "RoundMetrics",
    "WorkerState",
    "calibrate_sigma",
    "compute_alignment",
    "dbm_to_watts",
    "dwfl_round",
    "emit_metrics",
    "epsilon_dwfl",
    "epsilon_orthogonal",
    "mac_round",
    "parse_config",
    "preset",
    "resolve_setup",
    "run_batch",
    "run_experiment",
]
