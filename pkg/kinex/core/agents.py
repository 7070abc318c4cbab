"""
N-agent exchange simulator.
Four pairwise rules (binomial, uniform, repeated average, saving) under a
discrete event clock or a Poisson clock where every agent jumps at unit rate.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

import numpy as np

from kinex.core.config import resolve_workers
from kinex.core.distributions import empirical_pmf
from kinex.core.errors import ConfigurationError, ConservationError, ParameterError
from kinex.core.metrics import gini
from kinex.core.rng import make_rng, raw_words
from kinex.models import SimSnapshot, WealthState
from kinex.schemas.simulation import MAX_TOTAL_WEALTH, ExchangeRule, SimConfig

logger = logging.getLogger(__name__)

# Events drawn per vectorized batch of random numbers.
BLOCK_SIZE = 1 << 16
# Pools up to this size are split with the bits of one 64-bit word.
WORD_BITS = 64


def sample_binomial_half(n: int, rng: np.random.Generator) -> int:
    """
    Exact Binomial(n, 1/2) draw.
    n <= 64: popcount of n fair random bits; larger n: numpy's exact binomial sampler.
    """
    if n < 0:
        raise ParameterError(f"Number of coins must be nonnegative, got {n}")
    if n == 0:
        return 0
    if n <= WORD_BITS:
        word = raw_words(rng, 1)[0]
        return (word & ((1 << n) - 1)).bit_count()
    return int(rng.binomial(n, 0.5))


def _exchange_block(values: list, rule: ExchangeRule, rng: np.random.Generator, count: int) -> None:
    """Apply `count` pairwise exchanges to `values` in place."""
    N = len(values)
    first = rng.integers(0, N, size=count).tolist()
    second = rng.integers(0, N - 1, size=count).tolist()
    kind = rule.kind

    if kind == "binomial":
        words = raw_words(rng, count)
        for i, j, word in zip(first, second, words):
            if j >= i:
                j += 1
            pool = values[i] + values[j]
            if pool <= WORD_BITS:
                share = (word & ((1 << pool) - 1)).bit_count()
            else:
                share = int(rng.binomial(pool, 0.5))
            values[i] = share
            values[j] = pool - share
    elif kind == "uniform":
        draws = rng.random(count).tolist()
        for i, j, u in zip(first, second, draws):
            if j >= i:
                j += 1
            pool = values[i] + values[j]
            share = u * pool
            values[i] = share
            values[j] = pool - share
    elif kind == "repeated_average":
        for i, j in zip(first, second):
            if j >= i:
                j += 1
            pool = values[i] + values[j]
            half = 0.5 * pool
            values[i] = half
            values[j] = pool - half
    elif kind == "saving":
        s = rule.s
        kept = 1.0 - s
        draws = rng.random(count).tolist()
        for i, j, u in zip(first, second, draws):
            if j >= i:
                j += 1
            pool = values[i] + values[j]
            share = u * s * pool + kept * values[i]
            values[i] = share
            values[j] = pool - share
    else:
        raise ParameterError(f"Unknown exchange rule '{kind}'")


def step(state: WealthState, rule: ExchangeRule, rng: np.random.Generator) -> WealthState:
    """One exchange between a uniformly chosen unordered pair."""
    if state.N < 2:
        raise ConfigurationError(f"An exchange needs at least 2 agents, got N={state.N}")
    if rule.integer_valued and not state.is_integer:
        raise ParameterError("The binomial rule needs integer wealth")
    values = state.values.tolist()
    if not rule.integer_valued:
        values = [float(v) for v in values]
    _exchange_block(values, rule, rng, 1)
    dtype = np.int64 if rule.integer_valued else np.float64
    return WealthState(np.array(values, dtype=dtype), total=state.total)


def initial_wealth(cfg: SimConfig) -> WealthState:
    """Build the initial profile named in cfg.initial."""
    init = cfg.initial
    N = cfg.N
    if init.kind == "dirac":
        values = np.full(N, init.k, dtype=np.float64)
    elif init.kind == "uniform_range":
        if cfg.rule.integer_valued:
            span = int(round(init.b - init.a)) + 1
            values = init.a + (np.arange(N) % span).astype(np.float64)
        else:
            values = np.linspace(init.a, init.b, N)
    else:
        values = np.asarray(init.values, dtype=np.float64)
    if cfg.rule.integer_valued:
        values = np.rint(values).astype(np.int64)
    return WealthState(values)


def _snapshot(values: list, event: int, t_model: float, integer: bool) -> SimSnapshot:
    arr = np.array(values, dtype=np.int64 if integer else np.float64)
    pmf = empirical_pmf(arr) if integer else None
    mu = float(arr.mean())
    return SimSnapshot(
        event=event,
        t_model=t_model,
        pmf=pmf,
        gini=gini(arr) if mu > 0 else 0.0,
        mean=mu,
        variance=float(arr.var()),
        values=arr,
    )


def _check_conservation(values: list, total, integer: bool, event: int) -> None:
    if integer:
        actual = sum(values)
        if actual != total:
            raise ConservationError(total, actual, event)
    else:
        actual = float(np.sum(values))
        if abs(actual - total) > 1e-9 * len(values) * max(1.0, abs(total) / len(values)):
            raise ConservationError(total, actual, event)


def run(cfg: SimConfig, replica: int = 0) -> List[SimSnapshot]:
    """
    Simulate cfg.events exchanges and snapshot every cfg.snapshot_every events.
    Deterministic given (cfg.seed, replica). Under poisson_clock the model time
    advances by Exp(mean 2/N) per event; under discrete it is the event count.
    """
    problems = cfg.violations()
    if problems:
        raise ConfigurationError("; ".join(str(v) for v in problems))
    state = initial_wealth(cfg)
    integer = cfg.rule.integer_valued
    if integer and state.total > MAX_TOTAL_WEALTH:
        raise ConfigurationError(
            f"Total wealth {state.total} overflows the integer range (limit {MAX_TOTAL_WEALTH})"
        )

    rng = make_rng(cfg.seed, replica)
    values = state.values.tolist()
    total = state.total
    clock = cfg.time_convention == "poisson_clock"
    mean_gap = 2.0 / cfg.N
    t_model = 0.0
    event = 0
    snapshots = [_snapshot(values, 0, 0.0, integer)]
    logger.info("Simulating %s rule: N=%d events=%d seed=%d replica=%d",
                cfg.rule.kind, cfg.N, cfg.events, cfg.seed, replica)

    while event < cfg.events:
        next_snapshot = min(cfg.events, (event // cfg.snapshot_every + 1) * cfg.snapshot_every)
        while event < next_snapshot:
            count = min(BLOCK_SIZE, next_snapshot - event)
            _exchange_block(values, cfg.rule, rng, count)
            if clock:
                t_model += float(rng.exponential(mean_gap, size=count).sum())
            event += count
        _check_conservation(values, total, integer, event)
        snap = _snapshot(values, event, t_model if clock else float(event), integer)
        snapshots.append(snap)
        logger.debug("event=%d mean=%.6f gini=%.6f", event, snap.mean, snap.gini)

    logger.info("Finished %d events, final gini %.4f", event, snapshots[-1].gini)
    return snapshots


def _run_replica(args) -> List[SimSnapshot]:
    cfg, replica = args
    return run(cfg, replica)


def run_replicas(cfg: SimConfig, replicas: int, workers: Optional[int] = None) -> List[List[SimSnapshot]]:
    """Independent replicas, returned in replica-index order."""
    if replicas < 1:
        raise ParameterError(f"Need at least one replica, got {replicas}")
    jobs = [(cfg, r) for r in range(replicas)]
    n_workers = resolve_workers(workers, replicas)
    if n_workers == 1:
        return [_run_replica(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_run_replica, jobs))
