"""
Shared-coin coupling of the nonlinear pair process with its Poisson-stationary copy.
The McKean-Vlasov partner law is approximated by drawing partners from a finite
interacting ensemble of M coupled pairs.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional

import numpy as np

from kinex.core.config import resolve_workers
from kinex.core.distributions import mean as pmf_mean
from kinex.core.errors import ParameterError, PreconditionError
from kinex.core.rng import make_rng, raw_words
from kinex.models import CoupledEnsemble, CouplingBand, Pmf, TraceSeries

logger = logging.getLogger(__name__)

WORD_BITS = 64
MEAN_TOLERANCE = 1e-6
# Slope of the large-time envelope 1 / (c t + 1).
ENVELOPE_SLOPE = (1.0 - math.sqrt(2.0 / 3.0)) / 4.0

Observer = Callable[[float, CoupledEnsemble], None]


def _coin_sum(n: int, word: int, rng: np.random.Generator) -> int:
    if n <= WORD_BITS:
        return (word & ((1 << n) - 1)).bit_count()
    return int(rng.binomial(n, 0.5))


def _coupled_block(x: list, xbar: list, rng: np.random.Generator, count: int) -> None:
    """
    `count` coupled exchanges in place. Both copies read the same coin sequence:
    the first min(s, sbar) coins are common, the remaining |s - sbar| coins only
    count toward the larger pool.
    """
    M = len(x)
    first = rng.integers(0, M, size=count).tolist()
    second = rng.integers(0, M - 1, size=count).tolist()
    shared = raw_words(rng, count)
    tails = raw_words(rng, count)
    for i, j, w1, w2 in zip(first, second, shared, tails):
        if j >= i:
            j += 1
        s = x[i] + x[j]
        sb = xbar[i] + xbar[j]
        if s <= sb:
            nx = _coin_sum(s, w1, rng)
            nxb = nx + _coin_sum(sb - s, w2, rng)
        else:
            nxb = _coin_sum(sb, w1, rng)
            nx = nxb + _coin_sum(s - sb, w2, rng)
        x[i] = nx
        x[j] = s - nx
        xbar[i] = nxb
        xbar[j] = sb - nxb


def coupled_step(ens: CoupledEnsemble, rng: np.random.Generator) -> CoupledEnsemble:
    """One coupled exchange; model time advances by Exp(mean 2/M)."""
    if ens.M < 2:
        raise ParameterError(f"A coupled exchange needs M >= 2 pairs, got {ens.M}")
    x = ens.x.tolist()
    xbar = ens.xbar.tolist()
    _coupled_block(x, xbar, rng, 1)
    dt = float(rng.exponential(2.0 / ens.M))
    return CoupledEnsemble(np.array(x), np.array(xbar), ens.t + dt)


def envelope(t: np.ndarray) -> np.ndarray:
    """Large-time bound 1 / ((1 - sqrt(2/3)) t / 4 + 1) on the squared gap."""
    return 1.0 / (ENVELOPE_SLOPE * np.asarray(t, dtype=np.float64) + 1.0)


def initial_ensemble(p0: Pmf, lam: float, M: int, rng: np.random.Generator) -> CoupledEnsemble:
    """
    x ~ p0 and xbar ~ Poisson(lam), i.i.d., paired comonotonically (both sorted),
    which realizes the W2-optimal coupling of the two empirical marginals.
    """
    weights = p0.weights / p0.weights.sum()
    x = rng.choice(p0.K + 1, size=M, p=weights)
    xbar = rng.poisson(lam, size=M)
    return CoupledEnsemble(np.sort(x), np.sort(xbar), 0.0)


def run_coupling(
    p0: Pmf,
    lam: float,
    M: int,
    t_end: float,
    seed: int,
    replica: int = 0,
    points: int = 41,
    observer: Optional[Observer] = None,
) -> TraceSeries:
    """
    D(t) = ensemble mean of (x - xbar)^2 on a uniform grid of `points` times in [0, t_end].
    Events form a Poisson process of rate M/2, so each grid interval runs a
    Poisson-distributed number of coupled exchanges.
    """
    if abs(pmf_mean(p0) - lam) > MEAN_TOLERANCE:
        raise PreconditionError(
            f"Coupling needs matched means: mean(p0)={pmf_mean(p0):.9f}, lambda={lam}"
        )
    if M < 2:
        raise ParameterError(f"Ensemble size must be at least 2, got {M}")
    if points < 2 or t_end <= 0:
        raise ParameterError("Need t_end > 0 and at least 2 grid points")

    rng = make_rng(seed, replica)
    ens = initial_ensemble(p0, lam, M, rng)
    x = ens.x.tolist()
    xbar = ens.xbar.tolist()
    grid = np.linspace(0.0, t_end, points)
    values = []
    rate = M / 2.0
    logger.info("Coupling run: M=%d lambda=%g t_end=%g replica=%d", M, lam, t_end, replica)

    for k, t in enumerate(grid):
        if k > 0:
            events = int(rng.poisson(rate * (t - grid[k - 1])))
            done = 0
            while done < events:
                count = min(1 << 16, events - done)
                _coupled_block(x, xbar, rng, count)
                done += count
        current = CoupledEnsemble(np.array(x), np.array(xbar), float(t))
        values.append(current.squared_gap)
        if observer is not None:
            observer(float(t), current)
        logger.debug("t=%.3f D=%.6f", t, values[-1])

    return TraceSeries(grid, np.array(values), label="D")


def _coupling_replica(args) -> TraceSeries:
    p0, lam, M, t_end, seed, replica, points = args
    return run_coupling(p0, lam, M, t_end, seed, replica, points)


def run_coupling_replicas(
    p0: Pmf,
    lam: float,
    M: int,
    t_end: float,
    seed: int,
    replicas: int,
    points: int = 41,
    workers: Optional[int] = None,
) -> CouplingBand:
    """Mean and standard error of D(t) across independent replicas."""
    if replicas < 2:
        raise ParameterError(f"Standard errors need at least 2 replicas, got {replicas}")
    jobs = [(p0, lam, M, t_end, seed, r, points) for r in range(replicas)]
    n_workers = resolve_workers(workers, replicas)
    if n_workers == 1:
        traces: List[TraceSeries] = [_coupling_replica(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            traces = list(pool.map(_coupling_replica, jobs))
    stack = np.vstack([trace.values for trace in traces])
    times = traces[0].times
    return CouplingBand(
        times=times,
        mean=stack.mean(axis=0),
        stderr=stack.std(axis=0, ddof=1) / math.sqrt(replicas),
        bound=envelope(times),
        replicas=replicas,
    )


def first_crossing(band: CouplingBand, level: float = 1.0) -> Optional[float]:
    """First grid time with mean D <= level, or None."""
    hits = np.nonzero(band.mean <= level)[0]
    return float(band.times[hits[0]]) if hits.size else None
