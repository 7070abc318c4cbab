"""
Distances between laws on the integers, the Gini index, and decay-rate fits.
"""
import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from kinex.core.errors import LogDomainError, ParameterError, UndefinedError, UnreliableTailError
from kinex.models import DecayFit, Pmf, SqrtEnvelope, TraceSeries, Trajectory

logger = logging.getLogger(__name__)

# Inputs with more truncated mass than this are rejected by wasserstein().
TAIL_LIMIT = 1e-6
MIN_FIT_POINTS = 10


def wasserstein(p: Pmf, q: Pmf, order: int = 2) -> float:
    """
    W_p from the quantile functions, integrated exactly.
    Both inverse CDFs are constant between consecutive levels of F and G, so
    merging the two level sets yields segments with closed-form contributions.
    """
    if order not in (1, 2):
        raise ParameterError(f"Wasserstein order must be 1 or 2, got {order}")
    for name, r in (("p", p), ("q", q)):
        if r.trunc_defect > TAIL_LIMIT:
            raise UnreliableTailError(
                f"{name} has {r.trunc_defect:.3e} mass beyond K={r.K}; the distance is unreliable"
            )
    K = max(p.K, q.K)
    F = np.cumsum(p.padded(K))
    G = np.cumsum(q.padded(K))
    levels = np.union1d(np.union1d(F, G), [1.0])
    levels = levels[levels > 0.0]
    lefts = np.concatenate(([0.0], levels[:-1]))
    widths = levels - lefts
    qf = np.minimum(np.searchsorted(F, levels, side="left"), K)
    qg = np.minimum(np.searchsorted(G, levels, side="left"), K)
    gaps = np.abs(qf - qg).astype(np.float64)
    return float(np.sum(widths * gaps ** order) ** (1.0 / order))


def total_variation(p: Pmf, q: Pmf) -> float:
    K = max(p.K, q.K)
    return 0.5 * float(np.sum(np.abs(p.padded(K) - q.padded(K))))


def gini(values: Union[np.ndarray, Sequence[float], Pmf]) -> float:
    """
    Mean absolute difference over twice the mean.
    Vectors use the sorted-rank formula; a Pmf uses sum_k F(k)(1 - F(k)) / mean.
    """
    if isinstance(values, Pmf):
        k = np.arange(values.K + 1, dtype=np.float64)
        mu = float(np.dot(k, values.weights))
        if mu <= 0:
            raise UndefinedError("Gini index is undefined for a law with zero mean")
        F = np.cumsum(values.weights)
        return float(np.sum(F * (1.0 - F)) / mu)

    arr = np.sort(np.asarray(values, dtype=np.float64))
    if arr.size == 0:
        raise ParameterError("Gini index needs at least one value")
    if arr[0] < 0:
        raise ParameterError("Gini index needs nonnegative values")
    total = float(arr.sum())
    if total <= 0:
        raise UndefinedError("Gini index is undefined for zero total wealth")
    n = arr.size
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return float((2.0 * np.dot(ranks, arr) - (n + 1) * total) / (n * total))


def fit_decay(series: TraceSeries, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """
    Fit log v against t (exponential) and log v against log t (power law).
    Both fits are reported; choosing between them is left to the caller.
    """
    part = series.window(*window) if window is not None else series
    if len(part) < MIN_FIT_POINTS:
        raise ParameterError(
            f"Decay fit needs at least {MIN_FIT_POINTS} points, window has {len(part)}"
        )
    if np.any(part.values <= 0):
        raise LogDomainError(f"Trace '{part.label}' has nonpositive values in the fit window")
    if np.any(part.times <= 0):
        raise LogDomainError("Power-law fit needs strictly positive times")
    log_v = np.log(part.values)
    exp_fit = stats.linregress(part.times, log_v)
    poly_fit = stats.linregress(np.log(part.times), log_v)
    result = DecayFit(
        exp_rate=float(exp_fit.slope),
        exp_r2=float(exp_fit.rvalue ** 2),
        poly_exponent=float(poly_fit.slope),
        poly_r2=float(poly_fit.rvalue ** 2),
        points=len(part),
    )
    logger.info("Decay fit of %s: rate %.4f (r2 %.5f), exponent %.4f (r2 %.5f)",
                part.label, result.exp_rate, result.exp_r2, result.poly_exponent, result.poly_r2)
    return result


def sqrt_envelope(series: TraceSeries, window: Optional[Tuple[float, float]] = None) -> SqrtEnvelope:
    """Fit the t^(-1/2) envelope from above: C is the maximum of v(t) sqrt(t) on the window."""
    part = series.window(*window) if window is not None else series
    if len(part) < 2:
        raise ParameterError(f"Envelope fit needs at least 2 points, window has {len(part)}")
    if np.any(part.times <= 0):
        raise LogDomainError("Envelope fit needs strictly positive times")
    scaled = part.values * np.sqrt(part.times)
    peak = int(np.argmax(scaled))
    constant = float(scaled[peak])
    return SqrtEnvelope(
        constant=constant,
        anchor=float(part.times[peak]),
        tail_ratio=float(scaled[-1] / constant) if constant > 0 else 0.0,
        decreasing_after_anchor=bool(np.all(np.diff(scaled[peak:]) <= 0)),
    )


def wasserstein_trace(trajectory: Trajectory, target: Pmf, order: int = 2) -> TraceSeries:
    """W_order(p(t), target) at every snapshot of a trajectory."""
    values = [wasserstein(state, target, order) for state in trajectory.states]
    return TraceSeries(trajectory.times, np.array(values), label=f"W{order}")
