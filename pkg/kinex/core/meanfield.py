"""
Mean-field side of the binomial reshuffling model.
The collision operator Q[p] = law(B o (X + Y)) - p, a fixed-step RK4 integrator
for dp/dt = Q[p] on a truncated state vector, and closed-form moment oracles.
"""
import logging
import math
from typing import List, Tuple

import numpy as np
from scipy import stats

from kinex.core.distributions import (
    collision_gain, mean, poisson_pmf, retruncate, thinning_matrix,
)
from kinex.core.errors import ConfigurationError, NumericalError, ParameterError, TruncationError
from kinex.models import Pmf, SignedVector, Trajectory
from kinex.schemas.meanfield import OdeConfig

logger = logging.getLogger(__name__)

# Poisson tail mass allowed beyond the default truncation index.
TAIL_TOLERANCE = 1e-30
MAX_TRUNCATION = 512
# Largest |1 - sum p| tolerated at a snapshot.
MASS_DEFECT_LIMIT = 1e-6
# Snapshot times closer than this (in units of dt) to a grid point use the grid state.
GRID_SNAP = 1e-9


def default_truncation(lam: float) -> int:
    """Smallest K with Poisson(lam) mass beyond K below TAIL_TOLERANCE."""
    if not lam > 0:
        raise ParameterError(f"Poisson rate must be positive, got {lam}")
    for K in range(int(math.ceil(lam)), MAX_TRUNCATION + 1):
        if stats.poisson.sf(K, lam) < TAIL_TOLERANCE:
            return K
    raise ConfigurationError(
        f"Mean {lam} needs a truncation index above the cap of {MAX_TRUNCATION}"
    )


def _rates(weights: np.ndarray) -> Tuple[np.ndarray, float]:
    """Q on a raw weight vector: (rates for n <= K, gain mass beyond K)."""
    size = weights.size
    total = np.convolve(weights, weights)
    gain = thinning_matrix(total.size)[:size] @ total
    leakage = float(total.sum() - gain.sum())
    return gain - weights, leakage


def q_operator(p: Pmf) -> SignedVector:
    """
    Q[p]_n = P(B o (X + Y) = n) - p_n for n <= K.
    Gain that lands beyond K is returned as `leakage` instead of being dropped silently.
    """
    gain = collision_gain(p, p)
    entries = gain.weights[: p.K + 1] - p.weights
    leakage = float(gain.weights[p.K + 1:].sum())
    return SignedVector(entries, leakage)


def _rk4_step(w: np.ndarray, h: float) -> np.ndarray:
    k1, _ = _rates(w)
    k2, _ = _rates(w + 0.5 * h * k1)
    k3, _ = _rates(w + 0.5 * h * k2)
    k4, _ = _rates(w + h * k3)
    return w + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def default_snapshot_times(t_end: float, dt: float, every: float = 0.1) -> List[float]:
    """Grid-aligned snapshot times roughly `every` apart, always including 0 and t_end."""
    stride = max(1, int(round(every / dt)))
    n_steps = int(math.ceil(t_end / dt - GRID_SNAP))
    times = [i * dt for i in range(0, n_steps, stride)]
    times.append(t_end)
    return times


def _as_pmf(weights: np.ndarray, initial_defect: float, t: float) -> Pmf:
    low = float(weights.min())
    if low < -1e-12:
        raise NumericalError(
            f"Negative probability {low:.3e} at t={t:g}", index=int(np.argmin(weights))
        )
    clipped = np.clip(weights, 0.0, None)
    defect = max(0.0, 1.0 - float(clipped.sum()))
    return Pmf(clipped, max(defect, initial_defect))


def integrate(p0: Pmf, cfg: OdeConfig) -> Trajectory:
    """
    Classical RK4 with fixed step cfg.dt from p0 to cfg.t_end.
    Snapshots on grid points take the grid state; others are linearly interpolated.
    Leaked mass is tracked in mass_defect and never renormalized away.
    """
    problems = cfg.violations()
    if problems:
        raise ConfigurationError("; ".join(str(v) for v in problems))
    if not p0.is_normalized:
        raise ParameterError("Initial law must be normalized")
    K = cfg.K if cfg.K is not None else default_truncation(max(mean(p0), 1e-12))
    if K > MAX_TRUNCATION:
        raise ConfigurationError(f"Truncation index {K} exceeds the cap of {MAX_TRUNCATION}")
    start = retruncate(p0, K)
    if start.trunc_defect > MASS_DEFECT_LIMIT:
        raise TruncationError(0.0, start.trunc_defect, MASS_DEFECT_LIMIT)

    dt = cfg.dt
    t_end = cfg.t_end
    snaps = sorted(cfg.snapshot_times) if cfg.snapshot_times else default_snapshot_times(t_end, dt)
    n_steps = int(math.ceil(t_end / dt - GRID_SNAP))
    grid = [min(i * dt, t_end) for i in range(n_steps + 1)]
    grid[-1] = t_end
    logger.info("Integrating K=%d dt=%g t_end=%g (%d steps, %d snapshots)",
                K, dt, t_end, n_steps, len(snaps))

    times: List[float] = []
    states: List[Pmf] = []
    defects: List[float] = []
    w_prev = start.weights.copy()
    w = w_prev
    step = 0
    pending = 0

    def record(t: float, weights: np.ndarray) -> None:
        state = _as_pmf(weights, start.trunc_defect, t)
        defect = abs(1.0 - state.mass)
        if defect > MASS_DEFECT_LIMIT:
            raise TruncationError(t, defect, MASS_DEFECT_LIMIT)
        times.append(t)
        states.append(state)
        defects.append(defect)

    while pending < len(snaps):
        s = snaps[pending]
        # Advance until grid[step] >= s (within the snap tolerance).
        while grid[step] < s - GRID_SNAP * dt:
            h = grid[step + 1] - grid[step]
            w_prev = w
            w = _rk4_step(w, h)
            step += 1
        if abs(grid[step] - s) <= GRID_SNAP * dt:
            record(s, w)
        else:
            left, right = grid[step - 1], grid[step]
            theta = (s - left) / (right - left)
            record(s, (1.0 - theta) * w_prev + theta * w)
        pending += 1

    logger.debug("Final mass defect %.3e", defects[-1] if defects else 0.0)
    return Trajectory(np.array(times), states, np.array(defects))


def second_moment_forecast(mu: float, m2_0: float, t: float) -> float:
    """Second moment along the flow: mu^2 + mu + (m2_0 - mu^2 - mu) e^{-t/2}."""
    if m2_0 < mu * mu - 1e-12:
        raise ParameterError(
            f"Second moment {m2_0} is below mean^2 = {mu * mu}; the variance would be negative"
        )
    limit = mu * mu + mu
    return limit + (m2_0 - limit) * math.exp(-t / 2.0)


def equilibrium_residual(lam: float, K: int) -> float:
    """sup over n <= K/2 of |Q[Poisson(lam)|K]_n|; indices near K are excluded."""
    rates = q_operator(poisson_pmf(lam, K))
    return float(np.max(np.abs(rates.entries[: K // 2 + 1])))


def mean_drift(trajectory: Trajectory) -> float:
    """Largest |mean(p(t)) - mean(p(0))| over the snapshots."""
    means = np.array([mean(state) for state in trajectory.states])
    return float(np.max(np.abs(means - means[0])))
