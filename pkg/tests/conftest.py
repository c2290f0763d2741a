from __future__ import annotations

from typing import Any, Dict

import numpy as np
import pytest

from macfl.channel import ChannelConfig, compute_alignment
from macfl.config import build_config, resolve_setup
from macfl.learn import Dataset, Task, build_task
from macfl.privacy import PrivacyParams
from macfl.seeding import Streams


def pytest_configure(config) -> None:
    config.addinivalue_line("markers", "slow: long-running statistical checks (deselect with -m 'not slow')")


def quadratic_task(targets, curvature: float = 1.0) -> Task:
    """One worker per entry; each entry is that worker's list of target rows."""

    parts = []
    for rows in targets:
        features = np.atleast_2d(np.asarray(rows, dtype=float))
        parts.append(Dataset(features=features, labels=np.zeros(features.shape[0])))
    return build_task("quadratic", parts, curvature=curvature)


def experiment(**values: Any):
    """Validated config and its resolved setup."""

    config = build_config(values)
    return config, resolve_setup(config)


@pytest.fixture
def small_values() -> Dict[str, Any]:
    return {
        "workers": 4,
        "rounds": 3,
        "dimension": 3,
        "samples_per_worker": 5,
        "channel_noise_std": 0.0,
    }


@pytest.fixture
def streams() -> Streams:
    return Streams(seed=7)


@pytest.fixture
def unit_channel() -> ChannelConfig:
    return ChannelConfig.homogeneous(2, gain=1.0, power=2.0, channel_noise_std=0.0)


@pytest.fixture
def unit_alloc(unit_channel):
    # residual power 1 on every worker, so c = 1
    return compute_alignment(unit_channel, [0.5, 0.5])


@pytest.fixture
def unit_privacy() -> PrivacyParams:
    return PrivacyParams(epsilon_target=None, delta=1e-5, sigma=1.0, g_max=1.0)
