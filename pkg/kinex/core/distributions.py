"""
Probability mass functions over the nonnegative integers.
Reference laws, moments, CDF/quantile machinery and the binomial-thinning
collision gain B o (X + Y).
"""
import logging
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln, comb

from kinex.core.errors import ParameterError
from kinex.models import Pmf

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)


# ==========================================
# Construction
# ==========================================

def poisson_pmf(lam: float, K: int) -> Pmf:
    """Poisson(lam) truncated at K, evaluated in log-space; the cut tail goes to trunc_defect."""
    if not lam > 0:
        raise ParameterError(f"Poisson rate must be positive, got {lam}")
    if K < 0:
        raise ParameterError(f"Truncation index must be nonnegative, got {K}")
    k = np.arange(K + 1)
    weights = np.exp(k * np.log(lam) - lam - gammaln(k + 1))
    defect = max(0.0, 1.0 - float(weights.sum()))
    return Pmf(weights, defect)


def binomial_pmf(n: int, gamma: float) -> Pmf:
    """Binomial(n, gamma) on {0, ..., n}."""
    if n < 0:
        raise ParameterError(f"Binomial size must be nonnegative, got {n}")
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"Binomial probability must be in [0, 1], got {gamma}")
    return Pmf(stats.binom.pmf(np.arange(n + 1), n, gamma), 0.0)


def dirac_pmf(k: int) -> Pmf:
    """Point mass at k."""
    if k < 0:
        raise ParameterError(f"Dirac location must be nonnegative, got {k}")
    weights = np.zeros(k + 1)
    weights[k] = 1.0
    return Pmf(weights, 0.0)


def from_weights(weights: Sequence[float], trunc_defect: Optional[float] = None) -> Pmf:
    """Wrap raw weights; a missing defect is taken as whatever mass is absent."""
    arr = np.asarray(weights, dtype=np.float64)
    if trunc_defect is None:
        trunc_defect = max(0.0, 1.0 - float(arr.sum()))
    return Pmf(arr, trunc_defect)


def tilted_uniform_pmf(K: int, mean: float) -> Pmf:
    """
    Law on {0, ..., K} with the given mean: uniform plus a linear tilt.
    Used as the default "spread" initial condition (K=10, mean 5.15 for the decay runs).
    """
    if K < 1:
        raise ParameterError(f"Tilted uniform needs K >= 1, got {K}")
    k = np.arange(K + 1, dtype=np.float64)
    centred = k - K / 2.0
    slope = (mean - K / 2.0) / float(np.sum(centred * centred))
    weights = 1.0 / (K + 1) + slope * centred
    if np.any(weights < 0):
        raise ParameterError(f"Mean {mean} is not reachable by a nonnegative tilt on {{0..{K}}}")
    return Pmf(weights / weights.sum(), 0.0)


def empirical_pmf(values: np.ndarray) -> Pmf:
    """Empirical law of a vector of nonnegative integers."""
    values = np.asarray(values)
    if values.size == 0:
        raise ParameterError("Cannot build an empirical law from no values")
    counts = np.bincount(values.astype(np.int64))
    return Pmf(counts / values.size, 0.0)


def retruncate(p: Pmf, K: int) -> Pmf:
    """Cut p at K, moving the removed mass into trunc_defect (or zero-pad if K is larger)."""
    if K < 0:
        raise ParameterError(f"Truncation index must be nonnegative, got {K}")
    if K >= p.K:
        return Pmf(p.padded(K), p.trunc_defect)
    cut = float(p.weights[K + 1:].sum())
    return Pmf(p.weights[: K + 1], p.trunc_defect + cut)


# ==========================================
# Collision gain
# ==========================================

@lru_cache(maxsize=16)
def thinning_matrix(size: int) -> np.ndarray:
    """
    T[n, m] = C(m, n) 2^-m for 0 <= n <= m < size, zero above the diagonal.
    C(0, 0) = 1, so the empty coin sum keeps state 0 as a fixed point.
    """
    m = np.arange(size, dtype=np.float64)
    n = m[:, None]
    with np.errstate(invalid="ignore"):
        log_t = gammaln(m + 1) - gammaln(n + 1) - gammaln(m - n + 1) - m * LN2
    matrix = np.where(n <= m, np.exp(np.where(n <= m, log_t, 0.0)), 0.0)
    matrix.flags.writeable = False
    return matrix


def _check_normalized(*pmfs: Pmf) -> None:
    for p in pmfs:
        if not p.is_normalized:
            raise ParameterError(
                f"Expected a normalized Pmf, mass + defect = {p.mass + p.trunc_defect:.12f}"
            )


def collision_gain(p: Pmf, q: Pmf) -> Pmf:
    """
    Law of B o (X + Y) for independent X ~ p, Y ~ q.
    Convolve first, then thin each total m by Binomial(m, 1/2): O(K^2).
    Output truncation is K_p + K_q; nothing is renormalized.
    """
    _check_normalized(p, q)
    total = np.convolve(p.weights, q.weights)
    gain = thinning_matrix(total.size) @ total
    defect = p.trunc_defect + q.trunc_defect - p.trunc_defect * q.trunc_defect
    return Pmf(np.clip(gain, 0.0, None), defect)


def collision_gain_direct(p: Pmf, q: Pmf) -> Pmf:
    """
    The literal double sum over (k, l) with exact binomial coefficients.
    O(K^3); kept as the reference for collision_gain.
    """
    _check_normalized(p, q)
    size = p.K + q.K + 1
    out = np.zeros(size)
    for n in range(size):
        acc = 0.0
        for k in range(p.K + 1):
            for l in range(q.K + 1):
                m = k + l
                if m >= n:
                    acc += comb(m, n, exact=True) * 0.5 ** m * p.weights[k] * q.weights[l]
        out[n] = acc
    defect = p.trunc_defect + q.trunc_defect - p.trunc_defect * q.trunc_defect
    return Pmf(out, defect)


# ==========================================
# Moments & quantiles
# ==========================================

def mean(p: Pmf) -> float:
    return float(np.dot(np.arange(p.K + 1, dtype=np.float64), p.weights))


def second_moment(p: Pmf) -> float:
    k = np.arange(p.K + 1, dtype=np.float64)
    return float(np.dot(k * k, p.weights))


def variance(p: Pmf) -> float:
    mu = mean(p)
    return second_moment(p) - mu * mu


def cdf(p: Pmf) -> np.ndarray:
    return np.cumsum(p.weights)


def quantile(p: Pmf, z: float) -> int:
    """min{k : F(k) >= z} for z in (0, 1]."""
    if not 0.0 < z <= 1.0:
        raise ParameterError(f"Quantile level must be in (0, 1], got {z}")
    F = cdf(p)
    k = int(np.searchsorted(F, z, side="left"))
    if k > p.K:
        # Levels within rounding of F(K) still resolve to K.
        if z - F[-1] <= 1e-12:
            return p.K
        raise ParameterError(
            f"Quantile level {z} falls in the truncated tail (F(K)={F[-1]:.12f})"
        )
    return k
