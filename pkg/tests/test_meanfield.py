import math

import numpy as np
import pytest
from scipy import stats

from kinex.core.distributions import (
    collision_gain_direct, dirac_pmf, mean, poisson_pmf, second_moment, tilted_uniform_pmf,
)
from kinex.core.errors import ConfigurationError, ParameterError, TruncationError
from kinex.core.meanfield import (
    default_snapshot_times, default_truncation, equilibrium_residual, integrate, mean_drift,
    q_operator, second_moment_forecast,
)
from kinex.core.metrics import wasserstein, wasserstein_trace
from kinex.models import Pmf
from kinex.schemas.meanfield import OdeConfig


def test_q_vanishes_on_poisson(poisson5):
    rates = q_operator(poisson5)
    assert np.max(np.abs(rates.entries[:41])) < 1e-12


def test_q_on_unit_atom():
    rates = q_operator(dirac_pmf(1))
    np.testing.assert_allclose(rates.entries, [0.25, -0.5], atol=1e-15)
    assert rates.leakage == pytest.approx(0.25)
    padded = q_operator(Pmf(np.array([0.0, 1.0, 0.0, 0.0])))
    np.testing.assert_allclose(padded.entries, [0.25, -0.5, 0.25, 0.0], atol=1e-15)


def test_q_keeps_zero_fixed():
    np.testing.assert_array_equal(q_operator(dirac_pmf(0)).entries, [0.0])


def test_q_conserves_mass_including_leakage(rng):
    w = rng.random(21)
    rates = q_operator(Pmf(w / w.sum()))
    assert abs(rates.total + rates.leakage) < 1e-12


def test_q_matches_literal_double_sum(rng):
    w = rng.random(13)
    p = Pmf(w / w.sum())
    direct = collision_gain_direct(p, p).weights[:13] - p.weights
    np.testing.assert_allclose(q_operator(p).entries, direct, atol=1e-13, rtol=0)


def test_default_truncation():
    K = default_truncation(5.15)
    assert stats.poisson.sf(K, 5.15) < 1e-30
    assert stats.poisson.sf(K - 1, 5.15) >= 1e-30
    with pytest.raises(ParameterError):
        default_truncation(0.0)
    with pytest.raises(ConfigurationError):
        default_truncation(400.0)


def test_default_snapshots_are_on_the_grid():
    times = default_snapshot_times(1.5, 0.01)
    assert times[0] == 0.0 and times[-1] == 1.5
    assert len(times) == 16


def test_mean_is_conserved(delta5_trajectory):
    for state in delta5_trajectory.states:
        assert mean(state) == pytest.approx(5.0, abs=1e-10)
    assert mean_drift(delta5_trajectory) <= 1e-10


def test_mean_is_conserved_up_to_t10():
    traj = integrate(tilted_uniform_pmf(10, 5.15), OdeConfig(dt=0.01, t_end=10.0))
    assert mean_drift(traj) <= 1e-10


def test_second_moment_follows_closed_form(delta5_trajectory):
    for t, state in zip(delta5_trajectory.times, delta5_trajectory.states):
        assert second_moment(state) == pytest.approx(second_moment_forecast(5.0, 25.0, t), abs=1e-8)


def test_second_moment_forecast_values():
    assert second_moment_forecast(5.0, 25.0, 0.0) == 25.0
    assert second_moment_forecast(5.0, 25.0, 2.0) == pytest.approx(30.0 - 5.0 * math.exp(-1.0), abs=1e-12)
    assert second_moment_forecast(5.0, 25.0, 200.0) == pytest.approx(30.0, abs=1e-12)
    with pytest.raises(ParameterError):
        second_moment_forecast(5.0, 20.0, 1.0)


def test_poisson_is_stationary(poisson5):
    traj = integrate(poisson5, OdeConfig(K=60, dt=0.01, t_end=2.0))
    for state in traj.states:
        assert np.max(np.abs(state.weights - poisson5.weights)) < 1e-10


def test_variance_gap_bounds_w2_at_t15(delta5_trajectory, poisson5):
    # Var p(1.5) = 5 (1 - e^-0.75), so W2 to Poisson(5) is at least the gap in standard deviations.
    state = delta5_trajectory.state_at(1.5)
    gap = math.sqrt(5.0) - math.sqrt(5.0 * (1.0 - math.exp(-0.75)))
    w2 = wasserstein(state, poisson5, 2)
    assert w2 >= gap - 1e-9
    assert w2 < wasserstein(delta5_trajectory.states[0], poisson5, 2)


def test_w2_decreases_along_the_flow(delta5_trajectory, poisson5):
    trace = wasserstein_trace(delta5_trajectory, poisson5, 2).window(0.5, 6.0)
    assert np.all(np.diff(trace.values) < 0)
    assert trace.values[-1] < 0.5 * wasserstein(delta5_trajectory.state_at(1.5), poisson5, 2)


def test_rk4_is_fourth_order():
    p0 = tilted_uniform_pmf(10, 5.15)
    reference = integrate(p0, OdeConfig(K=60, dt=1e-4, t_end=1.0)).states[-1].weights
    coarse = integrate(p0, OdeConfig(K=60, dt=0.1, t_end=1.0)).states[-1].weights
    fine = integrate(p0, OdeConfig(K=60, dt=0.05, t_end=1.0)).states[-1].weights
    ratio = np.max(np.abs(coarse - reference)) / np.max(np.abs(fine - reference))
    assert 12.0 < ratio < 20.0


def test_interpolated_snapshot_lies_between_grid_states():
    cfg = OdeConfig(K=40, dt=0.1, t_end=0.3, snapshot_times=[0.0, 0.15, 0.3])
    traj = integrate(dirac_pmf(3), cfg)
    grid = integrate(dirac_pmf(3), OdeConfig(K=40, dt=0.1, t_end=0.3, snapshot_times=[0.1, 0.2]))
    np.testing.assert_allclose(traj.states[1].weights,
                               0.5 * (grid.states[0].weights + grid.states[1].weights), atol=1e-15)


def test_equilibrium_residual():
    assert equilibrium_residual(5.0, 60) < 1e-12
    assert equilibrium_residual(0.5, 40) < 1e-12
    assert equilibrium_residual(5.0, 10) > 1e-6


def test_under_truncation_is_reported():
    with pytest.raises(TruncationError) as info:
        integrate(poisson_pmf(5.0, 60), OdeConfig(K=12, dt=0.01, t_end=1.0))
    assert info.value.time == 0.0
    with pytest.raises(TruncationError) as info:
        integrate(dirac_pmf(5), OdeConfig(K=12, dt=0.01, t_end=3.0))
    assert info.value.time > 0.0


def test_invalid_config_is_rejected():
    with pytest.raises(ConfigurationError):
        integrate(dirac_pmf(5), OdeConfig(dt=0.5))
    with pytest.raises(ConfigurationError):
        integrate(dirac_pmf(5), OdeConfig(t_end=1.0, snapshot_times=[0.5, 0.2]))
