"""
Generating-function view of the mean-field dynamics.

phi(x, t) = sum_n p_n(t) x^n satisfies d/dt phi + phi = phi((1 + x) / 2)^2.
Sampling it at x = 1 - 2^-n gives a_n(t), which solves the cooperative system
a_n' = a_{n+1}^2 - a_n whose fixed points are the profiles exp(-mu 2^-n).
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial

from kinex.core.distributions import mean
from kinex.core.errors import InteriorPointError, NumericalError, ParameterError, PreconditionError
from kinex.models import ASystemState, Pmf, Trajectory

logger = logging.getLogger(__name__)

DEFAULT_DEPTH = 24
# Largest snapshot spacing accepted by the centered difference.
MAX_SPACING = 0.01
# Rounding slack allowed outside the unit cube before integration fails.
CUBE_SLACK = 1e-12
LIMIT_TOLERANCE = 1e-4


def generating_function(p: Pmf, x: float) -> float:
    """phi(x) = sum_n p_n x^n, evaluated by Horner's scheme."""
    if not p.is_normalized:
        raise PreconditionError(
            f"Generating function needs a normalized law, mass is {p.mass + p.trunc_defect:.12f}"
        )
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"x must lie in [0, 1], got {x}")
    return float(polynomial.polyval(x, p.weights))


def pde_residual(traj: Trajectory, x: float, t: float) -> float:
    """|d/dt phi(x, t) + phi(x, t) - phi((1 + x) / 2, t)^2| with a centered time difference."""
    idx = traj.index_of(t)
    if idx == 0 or idx == len(traj) - 1:
        raise InteriorPointError(f"t={t} is a trajectory boundary; a centered difference needs neighbours")
    before = traj.times[idx] - traj.times[idx - 1]
    after = traj.times[idx + 1] - traj.times[idx]
    if max(before, after) > MAX_SPACING + 1e-12:
        raise ParameterError(
            f"Snapshot spacing around t={t} is {max(before, after):g}, above {MAX_SPACING}"
        )
    dphi = (generating_function(traj.states[idx + 1], x)
            - generating_function(traj.states[idx - 1], x)) / (before + after)
    here = traj.states[idx]
    half = generating_function(here, 0.5 * (1.0 + x))
    return abs(dphi + generating_function(here, x) - half * half)


def generating_function_profile(p: Pmf, M: int = DEFAULT_DEPTH) -> ASystemState:
    """a_n = phi(1 - 2^-n) for n = 0..M, with mu taken from the mean of p."""
    if M < 0:
        raise ParameterError(f"Depth must be nonnegative, got {M}")
    a = [generating_function(p, 1.0 - 2.0 ** -n) for n in range(M + 1)]
    return ASystemState(np.array(a), mu=mean(p))


def limit_profile(mu: float, M: int = DEFAULT_DEPTH) -> np.ndarray:
    """exp(-mu 2^-n) for n = 0..M: the Poisson(mu) law seen through a_n."""
    return np.exp(-mu * np.exp2(-np.arange(M + 1, dtype=np.float64)))


def _a_rates(a: np.ndarray, boundary: float) -> np.ndarray:
    shifted = np.append(a[1:], boundary)
    return shifted * shifted - a


def integrate_a_system(
    a0: ASystemState,
    t_end: float,
    dt: float = 0.01,
    every: float = 0.1,
) -> List[ASystemState]:
    """
    RK4 on a_0..a_M with the tail pinned at a_{M+1} = exp(-mu 2^-(M+1)).
    States are recorded every `every` time units and at t_end.
    """
    if not 0 < dt <= 0.1:
        raise ParameterError(f"dt must lie in (0, 0.1], got {dt}")
    if t_end <= 0:
        raise ParameterError(f"t_end must be positive, got {t_end}")
    if np.any(a0.a < 0.0) or np.any(a0.a > 1.0):
        bad = int(np.nonzero((a0.a < 0.0) | (a0.a > 1.0))[0][0])
        raise PreconditionError(f"Initial a_{bad}={a0.a[bad]} lies outside [0, 1]")

    boundary = float(np.exp(-a0.mu * 2.0 ** -(a0.M + 1)))
    n_steps = int(np.ceil(t_end / dt - 1e-9))
    stride = max(1, int(round(every / dt)))
    a = a0.a.copy()
    t = a0.t
    states = [ASystemState(a.copy(), a0.mu, t)]
    logger.info("Integrating a-system: M=%d mu=%g t_end=%g dt=%g", a0.M, a0.mu, t_end, dt)

    for i in range(1, n_steps + 1):
        h = min(dt, a0.t + t_end - t)
        k1 = _a_rates(a, boundary)
        k2 = _a_rates(a + 0.5 * h * k1, boundary)
        k3 = _a_rates(a + 0.5 * h * k2, boundary)
        k4 = _a_rates(a + h * k3, boundary)
        a = a + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h

        outside = np.nonzero((a < -CUBE_SLACK) | (a > 1.0 + CUBE_SLACK) | ~np.isfinite(a))[0]
        if outside.size:
            n = int(outside[0])
            raise NumericalError(f"a_{n}={a[n]} left [0, 1] at t={t:g}", index=n)
        np.clip(a, 0.0, 1.0, out=a)

        if i % stride == 0 or i == n_steps:
            states.append(ASystemState(a.copy(), a0.mu, t))

    return states


def limit_gaps(state: ASystemState, mu: Optional[float] = None) -> np.ndarray:
    """|a_n - exp(-mu 2^-n)| for every n; mu defaults to the state's own."""
    target = limit_profile(state.mu if mu is None else mu, state.M)
    return np.abs(state.a - target)


def _outside_envelope(state: ASystemState, mu_low: float, mu_high: float, tol: float) -> np.ndarray:
    lower = limit_profile(mu_high, state.M)
    upper = limit_profile(mu_low, state.M)
    return (state.a < lower - tol) | (state.a > upper + tol)


def envelope_tail_index(state: ASystemState, mu_low: float, mu_high: float, tol: float = 1e-12) -> int:
    """
    Smallest n0 with a_n inside the envelope for every n >= n0.
    Returns M + 1 when even a_M lies outside.
    """
    outside = np.nonzero(_outside_envelope(state, mu_low, mu_high, tol))[0]
    return int(outside[-1]) + 1 if outside.size else 0


def envelope_violations(
    states: List[ASystemState],
    mu_low: float,
    mu_high: float,
    tol: float = 1e-12,
    from_index: int = 0,
) -> List[Dict[str, float]]:
    """
    Points with n >= from_index where a_n(t) leaves [exp(-mu_high 2^-n), exp(-mu_low 2^-n)].
    A larger mu gives the lower profile.
    """
    if mu_low > mu_high:
        raise ParameterError(f"Need mu_low <= mu_high, got {mu_low} > {mu_high}")
    found = []
    for state in states:
        bad = np.nonzero(_outside_envelope(state, mu_low, mu_high, tol))[0]
        bad = bad[bad >= from_index]
        for n in bad:
            found.append({"t": state.t, "n": int(n), "a_n": float(state.a[n])})
    return found


def laplace_report(
    p0: Pmf,
    t_end: float,
    M: int = DEFAULT_DEPTH,
    dt: float = 0.01,
    mu_low: Optional[float] = None,
    mu_high: Optional[float] = None,
) -> Tuple[Dict[str, object], List[ASystemState]]:
    """Integrate the a-system from p0; returns the summary report and the recorded states."""
    start = generating_function_profile(p0, M)
    states = integrate_a_system(start, t_end, dt)
    mu = start.mu
    low = mu - 1.0 if mu_low is None else mu_low
    high = mu + 1.0 if mu_high is None else mu_high
    gaps = limit_gaps(states[-1])
    tail = envelope_tail_index(start, low, high)
    if tail > M:
        logger.warning("Initial profile is outside the envelope mu in [%g, %g] up to n=%d", low, high, M)
    violations = envelope_violations(states, low, high, from_index=tail)
    converged = [int(n) for n in np.nonzero(gaps <= LIMIT_TOLERANCE)[0]]
    logger.info("a-system at t=%g: max gap %.3e, %d envelope violations",
                states[-1].t, float(gaps.max()), len(violations))
    return {
        "mu": mu,
        "M": M,
        "t_end": states[-1].t,
        "limit_gaps": [float(g) for g in gaps],
        "converged_indices": converged,
        "envelope": {"mu_low": low, "mu_high": high, "from_index": tail},
        "envelope_violations": violations,
    }, states
