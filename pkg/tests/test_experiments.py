import pytest

from kinex.core.distributions import mean
from kinex.core.experiments import build_law
from kinex.schemas.experiments import CouplingParams, InitialLaw


def test_poisson_law_is_not_cut_short():
    p = build_law(InitialLaw(kind="poisson", lam=5.0))
    assert p.K > 10
    assert mean(p) == pytest.approx(5.0, abs=1e-12)
    assert p.trunc_defect < 1e-12


def test_explicit_poisson_truncation_is_honored():
    assert build_law(InitialLaw(kind="poisson", lam=5.0, K=12)).K == 12


def test_tilted_uniform_defaults_to_support_ten():
    p = build_law(InitialLaw(kind="tilted_uniform", mean=5.15))
    assert p.K == 10
    assert mean(p) == pytest.approx(5.15, abs=1e-12)


def test_nominal_means():
    assert InitialLaw(kind="dirac", k=3).nominal_mean() == 3.0
    assert InitialLaw(kind="binomial", n=50, gamma=0.1).nominal_mean() == pytest.approx(5.0)
    assert InitialLaw(kind="file", path="p.json").nominal_mean() is None


def test_coupling_lambda_must_match_the_law():
    ok = CouplingParams(initial=InitialLaw(kind="dirac", k=5), lam=5.0)
    assert ok.violations() == []
    bad = CouplingParams(initial=InitialLaw(kind="dirac", k=5), lam=6.0)
    assert [v.field for v in bad.violations()] == ["couple.lambda"]
