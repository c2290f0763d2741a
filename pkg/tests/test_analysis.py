from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import quadratic_task
from macfl.analysis import (
    AnalysisParams,
    InfeasibleBoundError,
    analysis_params_for,
    bound_conditions,
    consensus_error,
    convergence_bound,
    sigma_z_squared,
    tuned_rate,
    tuned_step_size,
)
from macfl.channel import ChannelConfig, compute_alignment
from macfl.engine import mixing_spec


def _params(**overrides) -> AnalysisParams:
    values = dict(
        lipschitz=0.25,
        sigma_f=0.0,
        zeta=0.0,
        c4=1.0,
        sigma_z=0.0,
        dimension=1,
        rounds=1,
        n_workers=2,
    )
    values.update(overrides)
    return AnalysisParams(**values)


def test_sigma_z_squared_homogeneous(unit_channel, unit_alloc):
    assert sigma_z_squared(unit_channel, unit_alloc, sigma=1.0) == pytest.approx(1.0)
    noisy = ChannelConfig.homogeneous(3, power=2.0, channel_noise_std=2.0)
    alloc = compute_alignment(noisy, [0.5] * 3)
    # 1 from privacy noise plus 4 / (1 * 2^2) from the channel
    assert sigma_z_squared(noisy, alloc, sigma=1.0) == pytest.approx(2.0)


def test_bound_conditions_reject_unit_smoothness():
    violations = bound_conditions(_params(lipschitz=1.0), gamma=0.1)
    assert any("12 L^2 C2" in item for item in violations)
    assert bound_conditions(_params(), gamma=0.1) == []
    assert any("L=" in item for item in bound_conditions(_params(lipschitz=2.0), gamma=0.1))
    assert any("gamma" in item for item in bound_conditions(_params(), gamma=0.0))


def test_convergence_bound_closed_form():
    # C2 = 1/4, L = 1/4, gamma = 1, T = 1, only the initial-gap term survives
    denom = 1 - 6 * 0.25 * 0.0625
    expected = 1.0 / (0.5 - 3 * 0.0625 * 0.25 / denom)
    assert convergence_bound(_params(), gamma=1.0) == pytest.approx(expected, rel=1e-12)


def test_convergence_bound_is_linear_in_zeta():
    base = convergence_bound(_params(rounds=50), 0.1)
    one = convergence_bound(_params(rounds=50, zeta=1.0), 0.1)
    two = convergence_bound(_params(rounds=50, zeta=2.0), 0.1)
    assert two - base == pytest.approx(2 * (one - base), rel=1e-9)


def test_convergence_bound_grows_with_noise_and_shrinks_with_rounds():
    base = _params(sigma_f=1.0, sigma_z=0.5, dimension=4, n_workers=10, rounds=100)
    louder = _params(sigma_f=1.0, sigma_z=1.0, dimension=4, n_workers=10, rounds=100)
    longer = _params(sigma_f=1.0, sigma_z=0.5, dimension=4, n_workers=10, rounds=1000)
    assert convergence_bound(louder, 0.05) > convergence_bound(base, 0.05)
    assert convergence_bound(longer, 0.05) < convergence_bound(base, 0.05)


def test_convergence_bound_raises_with_violations():
    with pytest.raises(InfeasibleBoundError) as info:
        convergence_bound(_params(lipschitz=1.0), 0.1)
    assert info.value.violations


def test_tuned_step_size_and_rate():
    assert tuned_step_size(2.0, 10, 0.5, 100, 1.0) == pytest.approx(math.sqrt(0.8))
    rate = tuned_rate(2.0, 10, 0.5, 100, 1.0, 4, 0.5)
    c2 = 0.81
    expected = 2 * math.sqrt(2 * 2.0 * 0.5 / 1000) + 20 * c2 * 2.0 * 10 * 0.5 * 4 / (100 * 0.25)
    assert rate == pytest.approx(expected)
    assert tuned_rate(2.0, 10, 0.5, 100, 1.0, 4, 1.0) < rate
    with pytest.raises(ValueError, match="epsilon"):
        tuned_rate(2.0, 10, 0.5, 100, 1.0, 4, 0.0)


def test_consensus_error():
    assert consensus_error(np.ones((3, 4))) == 0.0
    assert consensus_error(np.array([[0.0, 2.0]])) == pytest.approx(2.0)
    assert consensus_error(np.array([0.0, 2.0])) == pytest.approx(2.0)


@pytest.mark.parametrize("eta", [0.05, 0.3, 0.5, 0.9, 1.0])
def test_mixing_never_increases_consensus_error(eta):
    rng = np.random.default_rng(5)
    for n in (2, 3, 7, 12):
        psi = mixing_spec(n, eta).Psi
        for _ in range(20):
            X = rng.normal(size=(4, n))
            assert consensus_error(X @ psi) <= consensus_error(X) * (1 + 1e-12)


def test_analysis_params_for_quadratic_task():
    task = quadratic_task([[[0.0], [2.0]], [[4.0], [6.0]]], curvature=0.5)
    config = ChannelConfig.homogeneous(2, power=2.0)
    alloc = compute_alignment(config, [0.5, 0.5])
    params = analysis_params_for(task, config, alloc, sigma=1.0, rounds=10)
    # optimum 3, loss gap from zero is (0.5/2) * 3^2
    assert params.c4 == pytest.approx(2.25)
    assert params.sigma_z == pytest.approx(1.0)
    assert params.zeta == pytest.approx(1.0)
    assert params.rounds == 10
    at_optimum = analysis_params_for(task, config, alloc, sigma=1.0, rounds=10, start=np.array([3.0]))
    assert at_optimum.c4 == pytest.approx(0.0, abs=1e-12)
