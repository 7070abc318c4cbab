"""
Exact analysis of the discrete-time binomial reshuffling chain for small N.
Enumerates the configuration space, builds the transition matrix, and checks
the stationary law against the multinomial weights.
"""
import logging
from functools import lru_cache
from itertools import combinations
from typing import Dict, Iterator, List, Tuple

import numpy as np
from scipy import sparse, stats
from scipy.special import comb, gammaln

from kinex.core.errors import ChainSizeError, NumericalError, ParameterError
from kinex.models import ConfigSpace, ExactChain

logger = logging.getLogger(__name__)

MAX_STATES = 2_000_000
STATIONARY_TOL = 1e-13
MAX_ITERATIONS = 1_000_000


def state_count(N: int, total: int) -> int:
    """|A_{N,total}| = C(total + N - 1, N - 1)."""
    return int(comb(total + N - 1, N - 1, exact=True))


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def enumerate_states(N: int, total: int) -> ConfigSpace:
    """All compositions of `total` into N parts, ascending in the first agent's wealth."""
    if N < 2:
        raise ParameterError(f"The chain needs N >= 2 agents, got {N}")
    if total < 0:
        raise ParameterError(f"Total wealth must be nonnegative, got {total}")
    count = state_count(N, total)
    if count > MAX_STATES:
        raise ChainSizeError(count, MAX_STATES)
    states = np.array(list(_compositions(total, N)), dtype=np.int64).reshape(count, N)
    index = {tuple(int(v) for v in row): i for i, row in enumerate(states)}
    return ConfigSpace(N=N, total=total, states=states, index=index)


@lru_cache(maxsize=None)
def _split_probabilities(pool: int) -> np.ndarray:
    return stats.binom.pmf(np.arange(pool + 1), pool, 0.5)


def build_chain(N: int, total: int) -> ExactChain:
    """
    P(Y -> Z) summed over the unordered pairs {i, j} that map Y to Z:
    2 / (N (N - 1)) * C(Y_i + Y_j, Z_i) 2^-(Y_i + Y_j).
    """
    space = enumerate_states(N, total)
    pair_weight = 2.0 / (N * (N - 1))
    rows: List[int] = []
    cols: List[int] = []
    probs: List[float] = []
    pairs = list(combinations(range(N), 2))

    for row, state in enumerate(space.states):
        base = [int(v) for v in state]
        for i, j in pairs:
            pool = base[i] + base[j]
            split = _split_probabilities(pool)
            target = list(base)
            for z in range(pool + 1):
                target[i] = z
                target[j] = pool - z
                rows.append(row)
                cols.append(space.index[tuple(target)])
                probs.append(pair_weight * split[z])

    size = len(space)
    matrix = sparse.coo_matrix((probs, (rows, cols)), shape=(size, size)).tocsr()
    matrix.sum_duplicates()
    logger.info("Built chain N=%d total=%d: %d states, %d nonzeros", N, total, size, matrix.nnz)
    return ExactChain(space=space, matrix=matrix)


def stationary(chain: ExactChain, tol: float = STATIONARY_TOL,
               max_iterations: int = MAX_ITERATIONS) -> np.ndarray:
    """Power iteration from the uniform vector until ||pi P - pi||_1 < tol."""
    size = len(chain.space)
    transposed = chain.matrix.T.tocsr()
    pi = np.full(size, 1.0 / size)
    for iteration in range(max_iterations):
        nxt = transposed @ pi
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt / nxt.sum()
        if residual < tol:
            logger.debug("Power iteration converged after %d steps (residual %.2e)",
                         iteration + 1, residual)
            return pi
    raise NumericalError(
        f"Power iteration did not reach residual {tol:g} in {max_iterations} iterations"
    )


def multinomial_weight(state, N: int, total: int) -> float:
    """C(total; X_1..X_N) N^-total: each unit of wealth independently in a uniform pocket."""
    x = np.asarray(state, dtype=np.float64)
    if x.size != N or int(round(x.sum())) != total or np.any(x < 0):
        raise ParameterError(f"State {tuple(state)} is not a composition of {total} into {N} parts")
    log_w = gammaln(total + 1) - float(np.sum(gammaln(x + 1))) - total * np.log(N)
    return float(np.exp(log_w))


def multinomial_vector(space: ConfigSpace) -> np.ndarray:
    x = space.states.astype(np.float64)
    log_w = gammaln(space.total + 1) - gammaln(x + 1).sum(axis=1) - space.total * np.log(space.N)
    return np.exp(log_w)


def detailed_balance_residual(chain: ExactChain) -> float:
    """max over (Y, Z) of |P(Y->Z) w(Y) - P(Z->Y) w(Z)| with w the multinomial law."""
    weights = multinomial_vector(chain.space)
    flux = sparse.diags(weights) @ chain.matrix
    gap = abs(flux - flux.T)
    return float(gap.max()) if gap.nnz else 0.0


def marginal(pi: np.ndarray, space: ConfigSpace, agent: int, n: int) -> float:
    """Stationary probability that `agent` holds exactly n."""
    if not 0 <= agent < space.N:
        raise ParameterError(f"Agent index must be in [0, {space.N}), got {agent}")
    return float(pi[space.states[:, agent] == n].sum())


def poisson_limit_gap(N: int, mu: float, n: int) -> float:
    """|Binomial(N mu, 1/N)(n) - Poisson(mu)(n)|."""
    total = N * mu
    if abs(total - round(total)) > 1e-9:
        raise ParameterError(f"N * mu must be an integer, got {total}")
    return abs(float(stats.binom.pmf(n, int(round(total)), 1.0 / N)) - float(stats.poisson.pmf(n, mu)))


def chain_report(N: int, total: int) -> Dict[str, object]:
    """Stationary law vs the multinomial weights, detailed balance and agent marginals."""
    return compare_stationary(build_chain(N, total))


def compare_stationary(chain: ExactChain) -> Dict[str, object]:
    N = chain.space.N
    total = chain.space.total
    pi = stationary(chain)
    weights = multinomial_vector(chain.space)
    reference = stats.binom.pmf(np.arange(total + 1), total, 1.0 / N)
    marginal_gaps = [abs(marginal(pi, chain.space, 0, n) - float(reference[n]))
                     for n in range(total + 1)]
    return {
        "N": N,
        "total": total,
        "states": len(chain.space),
        "max_abs_gap": float(np.max(np.abs(pi - weights))),
        "detailed_balance_residual": detailed_balance_residual(chain),
        "marginal_gaps": marginal_gaps,
    }


def matrix_rows(chain: ExactChain) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(row, col, prob) arrays of the nonzero transitions, row-major."""
    coo = chain.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return coo.row[order], coo.col[order], coo.data[order]
