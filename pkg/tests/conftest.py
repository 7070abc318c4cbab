import numpy as np
import pytest

from kinex.core.distributions import dirac_pmf, poisson_pmf
from kinex.core.meanfield import integrate
from kinex.schemas.meanfield import OdeConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def poisson5():
    return poisson_pmf(5.0, 60)


@pytest.fixture(scope="session")
def poisson5_wide():
    return poisson_pmf(5.0, 80)


@pytest.fixture(scope="session")
def delta5_trajectory():
    """Mean-field flow from a point mass at 5, snapshots every 0.1 up to t=10."""
    return integrate(dirac_pmf(5), OdeConfig(K=60, dt=0.01, t_end=10.0))


@pytest.fixture
def single_thread(monkeypatch):
    monkeypatch.setenv("KINEX_THREADS", "1")
