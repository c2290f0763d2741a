from __future__ import annotations

import math

import numpy as np
import pytest

from macfl.channel import ChannelConfig, compute_alignment
from macfl.privacy import (
    PrivacyError,
    PrivacyParams,
    calibrate_sigma,
    calibrate_sigma_orthogonal,
    clip_gradient,
    epsilon_dwfl,
    epsilon_orthogonal,
    epsilon_upper_bound,
    gaussian_multiplier,
    l2_sensitivity,
    naive_composition,
)

REFERENCE_EPSILON = 0.2 * math.sqrt(2 * math.log(125000))


def _privacy(sigma: float = 1.0, g_max: float = 1.0, epsilon=None) -> PrivacyParams:
    return PrivacyParams(epsilon_target=epsilon, delta=1e-5, sigma=sigma, g_max=g_max)


def test_l2_sensitivity_examples():
    assert l2_sensitivity(1.0, 0.1, 1.0) == pytest.approx(0.2)
    assert l2_sensitivity(2.0, 0.5, 3.0) == pytest.approx(6.0)
    with pytest.raises(PrivacyError, match="c must be > 0"):
        l2_sensitivity(0.0, 0.1, 1.0)


def test_epsilon_dwfl_two_worker_reference(unit_channel, unit_alloc, unit_privacy):
    assert unit_alloc.c == pytest.approx(1.0)
    eps = epsilon_dwfl(unit_channel, unit_alloc, unit_privacy, gamma=0.1, receiver=1)
    assert eps == pytest.approx(REFERENCE_EPSILON, rel=1e-12)
    assert eps == pytest.approx(0.9689, abs=1e-4)


def test_epsilon_dwfl_zero_step_leaks_nothing(unit_channel, unit_alloc, unit_privacy):
    assert epsilon_dwfl(unit_channel, unit_alloc, unit_privacy, gamma=0.0) == 0.0


def test_epsilon_dwfl_rejects_zero_noise(unit_channel, unit_alloc):
    with pytest.raises(PrivacyError, match="zero total noise"):
        epsilon_dwfl(unit_channel, unit_alloc, _privacy(sigma=0.0), gamma=0.1)


def test_epsilon_orthogonal_reference_and_limit():
    eps = epsilon_orthogonal(1.0, 1.0, 1.0, _privacy(), gamma=0.1)
    assert eps == pytest.approx(REFERENCE_EPSILON, rel=1e-12)
    huge = epsilon_orthogonal(1.0, 1.0, 1.0, _privacy(sigma=1e9), gamma=0.1)
    assert huge < 1e-8


def test_privacy_scales_as_inverse_sqrt_of_neighbours():
    def eps(n: int) -> float:
        config = ChannelConfig.homogeneous(n, gain=1.0, power=2.0)
        alloc = compute_alignment(config, [0.5] * n)
        return epsilon_dwfl(config, alloc, _privacy(), gamma=0.1, receiver=0)

    scaled = [eps(n) * math.sqrt(n - 1) for n in range(2, 102)]
    np.testing.assert_allclose(scaled, scaled[0], rtol=1e-9)
    assert eps(101) / eps(26) == pytest.approx(0.5, rel=1e-9)


def test_upper_bound_dominates_and_is_tight_when_homogeneous():
    rng = np.random.default_rng(2)
    n = 6
    config = ChannelConfig(
        n_workers=n,
        gains=tuple(rng.uniform(0.5, 2.0, n)),
        phases=(0.0,) * n,
        max_power=tuple(rng.uniform(0.5, 4.0, n)),
        channel_noise_std=0.3,
    )
    alloc = compute_alignment(config, rng.uniform(0.1, 0.8, n))
    for i in range(n):
        exact = epsilon_dwfl(config, alloc, _privacy(), 0.1, receiver=i)
        assert epsilon_upper_bound(config, alloc, _privacy(), 0.1, receiver=i) >= exact

    homogeneous = ChannelConfig.homogeneous(n, power=3.0)
    even = compute_alignment(homogeneous, [0.4] * n)
    assert epsilon_upper_bound(homogeneous, even, _privacy(), 0.1) == pytest.approx(
        epsilon_dwfl(homogeneous, even, _privacy(), 0.1), rel=1e-12
    )


def test_dwfl_never_leaks_more_than_orthogonal_when_homogeneous():
    for n in range(2, 30):
        config = ChannelConfig.homogeneous(n, gain=1.0, power=2.0)
        alloc = compute_alignment(config, [0.5] * n)
        dwfl = epsilon_dwfl(config, alloc, _privacy(), 0.1)
        orthogonal = epsilon_orthogonal(1.0, 2.0, 0.5, _privacy(), 0.1)
        assert dwfl <= orthogonal


def test_epsilon_monotonicity():
    config = ChannelConfig.homogeneous(4, gain=1.0, power=2.0, channel_noise_std=0.1)
    alloc = compute_alignment(config, [0.5] * 4)
    base = epsilon_dwfl(config, alloc, _privacy(), 0.1)
    assert epsilon_dwfl(config, alloc, _privacy(), 0.2) > base
    assert epsilon_dwfl(config, alloc, _privacy(g_max=2.0), 0.1) > base
    assert epsilon_dwfl(config, alloc, _privacy(sigma=2.0), 0.1) < base


@pytest.mark.parametrize("channel_noise_std", [0.0, 0.5])
def test_epsilon_decreases_as_other_senders_add_noise(channel_noise_std):
    config = ChannelConfig(
        n_workers=4,
        gains=(1.0, 0.8, 1.5, 1.2),
        phases=(0.0,) * 4,
        max_power=(2.0, 3.0, 1.0, 4.0),
        channel_noise_std=channel_noise_std,
    )
    for sender in (1, 2, 3):
        values = []
        for beta_k in (0.0, 0.2, 0.4, 0.6, 0.8):
            beta = [0.3] * 4
            beta[sender] = beta_k
            alloc = compute_alignment(config, beta)
            values.append(epsilon_dwfl(config, alloc, _privacy(), 0.1, receiver=0))
        assert all(later < earlier for earlier, later in zip(values, values[1:]))


def test_calibrate_sigma_reference_roundtrip(unit_channel, unit_alloc):
    sigma = calibrate_sigma(REFERENCE_EPSILON, unit_channel, unit_alloc, 0.1, 1.0, 1e-5, receiver=1)
    assert sigma == pytest.approx(1.0, rel=1e-12)


def test_calibrate_sigma_halving_target_doubles_sigma():
    config = ChannelConfig.homogeneous(5, power=2.0)
    alloc = compute_alignment(config, [0.5] * 5)
    sigma = calibrate_sigma(0.5, config, alloc, 0.1, 1.0, 1e-5)
    assert calibrate_sigma(0.25, config, alloc, 0.1, 1.0, 1e-5) == pytest.approx(2 * sigma, rel=1e-12)


def test_calibrate_sigma_needs_no_noise_when_channel_suffices():
    config = ChannelConfig.homogeneous(3, power=2.0, channel_noise_std=1.0)
    alloc = compute_alignment(config, [0.5] * 3)
    assert calibrate_sigma(1e9, config, alloc, 0.1, 1.0, 1e-5) == 0.0


def test_calibrate_sigma_infeasible_without_noise_power():
    config = ChannelConfig.homogeneous(3, power=2.0)
    alloc = compute_alignment(config, [0.0] * 3)
    with pytest.raises(PrivacyError, match="infeasible"):
        calibrate_sigma(0.5, config, alloc, 0.1, 1.0, 1e-5)


def test_calibrate_sigma_orthogonal_roundtrip():
    sigma = calibrate_sigma_orthogonal(0.3, 1.5, 2.0, 0.4, 0.1, 1.0, 1e-5, channel_noise_std=0.2)
    eps = epsilon_orthogonal(1.5, 2.0, 0.4, _privacy(sigma=sigma), 0.1, channel_noise_std=0.2)
    assert eps == pytest.approx(0.3, rel=1e-9)


@pytest.mark.parametrize(
    "g, g_max, expected",
    [
        ([3.0, 4.0], 10.0, [3.0, 4.0]),
        ([3.0, 4.0], 5.0, [3.0, 4.0]),
        ([3.0, 4.0], 1.0, [0.6, 0.8]),
        ([0.0, 0.0], 1.0, [0.0, 0.0]),
    ],
)
def test_clip_gradient(g, g_max, expected):
    np.testing.assert_allclose(clip_gradient(np.array(g), g_max), expected)


def test_clip_gradient_is_idempotent():
    g = np.array([30.0, -40.0, 12.0])
    once = clip_gradient(g, 2.0)
    np.testing.assert_allclose(clip_gradient(once, 2.0), once, rtol=1e-12)
    assert np.linalg.norm(once) == pytest.approx(2.0)


def test_privacy_params_validation_and_regime_flag():
    with pytest.raises(PrivacyError, match="delta"):
        PrivacyParams(epsilon_target=0.5, delta=1.0, sigma=1.0, g_max=1.0)
    assert PrivacyParams(epsilon_target=0.5, delta=1e-5, sigma=1.0, g_max=1.0).in_proven_regime
    assert not PrivacyParams(epsilon_target=1.0, delta=1e-5, sigma=1.0, g_max=1.0).in_proven_regime


def test_gaussian_multiplier_and_composition():
    assert gaussian_multiplier(1e-5) == pytest.approx(math.sqrt(2 * math.log(125000)))
    assert naive_composition(0.5, 200) == pytest.approx(100.0)
