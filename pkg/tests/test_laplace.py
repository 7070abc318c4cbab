import math

import numpy as np
import pytest

from kinex.core.distributions import binomial_pmf, dirac_pmf, poisson_pmf
from kinex.core.errors import InteriorPointError, NumericalError, ParameterError, PreconditionError
from kinex.core.laplace import (
    _a_rates, envelope_tail_index, envelope_violations, generating_function, generating_function_profile,
    integrate_a_system, laplace_report, limit_gaps, limit_profile, pde_residual,
)
from kinex.core.meanfield import integrate
from kinex.models import ASystemState, Pmf
from kinex.schemas.meanfield import OdeConfig


def _dense_trajectory(p0, t_end, dt):
    steps = int(round(t_end / dt))
    times = [i * dt for i in range(steps + 1)]
    return integrate(p0, OdeConfig(K=60, dt=dt, t_end=t_end, snapshot_times=times))


@pytest.fixture(scope="module")
def dense_delta5():
    return _dense_trajectory(dirac_pmf(5), 1.0, 0.01)


def test_generating_function_examples(poisson5_wide):
    assert generating_function(poisson5_wide, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert generating_function(poisson5_wide, 0.5) == pytest.approx(math.exp(-2.5), abs=1e-10)
    for x in (0.0, 0.3, 0.9):
        assert generating_function(dirac_pmf(3), x) == pytest.approx(x ** 3, abs=1e-15)


def test_generating_function_rejects_bad_input():
    with pytest.raises(PreconditionError):
        generating_function(Pmf(np.array([0.5, 0.2])), 0.5)
    with pytest.raises(ParameterError):
        generating_function(dirac_pmf(1), 1.5)


def test_flow_satisfies_the_pde(dense_delta5):
    for x in (0.2, 0.5, 0.9):
        assert pde_residual(dense_delta5, x, 0.5) < 1e-4
    assert pde_residual(dense_delta5, 1.0, 0.5) < 1e-12


def test_pde_residual_is_second_order(dense_delta5):
    finer = _dense_trajectory(dirac_pmf(5), 1.0, 0.005)
    xs = np.linspace(0.1, 0.9, 9)
    coarse_max = max(pde_residual(dense_delta5, x, 0.5) for x in xs)
    fine_max = max(pde_residual(finer, x, 0.5) for x in xs)
    assert 3.0 < coarse_max / fine_max < 5.0


def test_pde_holds_at_poisson(poisson5):
    traj = _dense_trajectory(poisson5, 0.1, 0.01)
    assert pde_residual(traj, 0.3, 0.05) < 1e-10


def test_pde_residual_needs_interior_dense_points(dense_delta5, delta5_trajectory):
    with pytest.raises(InteriorPointError):
        pde_residual(dense_delta5, 0.5, 0.0)
    with pytest.raises(InteriorPointError):
        pde_residual(dense_delta5, 0.5, 1.0)
    with pytest.raises(ParameterError):
        pde_residual(delta5_trajectory, 0.5, 1.0)


def test_limit_profile_is_a_fixed_point():
    for mu in (0.5, 5.0, 12.0):
        a = limit_profile(mu, 24)
        boundary = math.exp(-mu * 2.0 ** -25)
        assert np.max(np.abs(_a_rates(a, boundary))) < 1e-15


def test_profile_of_poisson_matches_the_limit(poisson5_wide):
    state = generating_function_profile(poisson5_wide, 24)
    assert state.M == 24
    assert state.mu == pytest.approx(5.0, abs=1e-10)
    assert np.max(limit_gaps(state)) < 1e-10


def test_stationary_profile_stays_put():
    start = ASystemState(limit_profile(5.0, 24), mu=5.0)
    states = integrate_a_system(start, 10.0)
    assert states[-1].t == pytest.approx(10.0)
    for state in states:
        assert np.max(np.abs(state.a - start.a)) < 1e-10


def test_profile_relaxes_to_the_limit():
    states = integrate_a_system(generating_function_profile(dirac_pmf(5), 20), 40.0)
    assert states[0].a[0] == 0.0
    assert np.max(limit_gaps(states[-1])[:11]) < 1e-4


def test_envelope_is_preserved():
    start = generating_function_profile(binomial_pmf(50, 0.1), 20)
    states = integrate_a_system(start, 20.0)
    assert envelope_violations(states, 4.0, 6.0) == []


def test_envelope_violations_are_reported():
    states = [generating_function_profile(dirac_pmf(5), 10)]
    found = envelope_violations(states, 4.0, 6.0)
    assert found[0] == {"t": 0.0, "n": 0, "a_n": 0.0}
    with pytest.raises(ParameterError):
        envelope_violations(states, 6.0, 4.0)


def test_point_mass_enters_the_envelope_from_its_tail():
    start = generating_function_profile(dirac_pmf(5), 24)
    assert envelope_tail_index(start, 4.0, 6.0) == 2
    assert envelope_violations([start], 4.0, 6.0, from_index=2) == []
    report, _ = laplace_report(dirac_pmf(5), 1.0, M=24)
    assert report["envelope"]["from_index"] == 2
    assert report["envelope_violations"] == []


def test_tail_index_when_nothing_fits():
    start = generating_function_profile(dirac_pmf(5), 10)
    assert envelope_tail_index(start, 0.0, 0.5) == 11


def test_ordered_profiles_stay_ordered():
    low = integrate_a_system(generating_function_profile(binomial_pmf(20, 0.25), 20), 10.0)
    high = integrate_a_system(generating_function_profile(binomial_pmf(50, 0.1), 20), 10.0)
    assert np.all(low[0].a <= high[0].a)
    for a, b in zip(low, high):
        assert a.t == b.t
        assert np.all(a.a <= b.a + 1e-12)


def test_a_system_agrees_with_meanfield_flow():
    traj = integrate(dirac_pmf(5), OdeConfig(K=60, dt=0.01, t_end=5.0))
    states = integrate_a_system(generating_function_profile(dirac_pmf(5), 20), 5.0)
    for state in states:
        p = traj.state_at(state.t)
        for n in range(9):
            assert state.a[n] == pytest.approx(generating_function(p, 1.0 - 2.0 ** -n), abs=1e-4)


def test_a_system_rejects_bad_input():
    with pytest.raises(PreconditionError):
        integrate_a_system(ASystemState(np.array([0.5, 1.5]), mu=1.0), 1.0)
    with pytest.raises(ParameterError):
        integrate_a_system(ASystemState(limit_profile(5.0, 4), mu=5.0), 1.0, dt=0.5)
    with pytest.raises(ParameterError):
        integrate_a_system(ASystemState(limit_profile(5.0, 4), mu=5.0), 0.0)


def test_blow_up_leaves_the_cube():
    # A negative mean pins the boundary far above 1.
    with pytest.raises(NumericalError) as info:
        integrate_a_system(ASystemState(np.full(3, 0.5), mu=-50.0), 1.0)
    assert info.value.index is not None


def test_laplace_report():
    report, states = laplace_report(binomial_pmf(50, 0.1), 40.0, M=20)
    assert report["mu"] == pytest.approx(5.0, abs=1e-12)
    assert report["M"] == 20
    assert report["t_end"] == pytest.approx(40.0)
    assert report["envelope"] == {"mu_low": pytest.approx(4.0), "mu_high": pytest.approx(6.0), "from_index": 0}
    assert report["envelope_violations"] == []
    assert report["converged_indices"] == list(range(21))
    assert len(report["limit_gaps"]) == 21
    assert states[-1].t == pytest.approx(40.0)
