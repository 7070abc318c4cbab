from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse

from kinex.core.errors import ParameterError

# Tolerance used to call a Pmf normalized.
NORMALIZATION_TOL = 1e-9


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


# ==========================================
# 1. DISTRIBUTIONS
# ==========================================

@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability mass vector over {0, ..., K} plus the mass known to lie beyond K."""
    weights: np.ndarray
    trunc_defect: float = 0.0

    def __post_init__(self):
        weights = _frozen_array(self.weights)
        if weights.ndim != 1 or weights.size == 0:
            raise ParameterError("Pmf weights must be a non-empty 1-D vector")
        if not np.all(np.isfinite(weights)):
            raise ParameterError("Pmf weights must be finite")
        if np.any(weights < 0):
            raise ParameterError(f"Pmf weights must be nonnegative, min is {weights.min():.3e}")
        if self.trunc_defect < 0:
            raise ParameterError(f"trunc_defect must be nonnegative, got {self.trunc_defect}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "trunc_defect", float(self.trunc_defect))

    @property
    def K(self) -> int:
        """Truncation index (last represented state)."""
        return self.weights.size - 1

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def is_normalized(self) -> bool:
        return abs(self.mass + self.trunc_defect - 1.0) <= NORMALIZATION_TOL

    def padded(self, K: int) -> np.ndarray:
        """Weights zero-padded up to index K (K must not cut represented states)."""
        if K < self.K:
            raise ParameterError(f"Cannot pad a Pmf with K={self.K} down to K={K}")
        out = np.zeros(K + 1)
        out[: self.weights.size] = self.weights
        return out


@dataclass(frozen=True, eq=False)
class SignedVector:
    """Rates produced by the collision operator; `leakage` is the gain that fell past K."""
    entries: np.ndarray
    leakage: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen_array(self.entries))
        object.__setattr__(self, "leakage", float(self.leakage))

    @property
    def total(self) -> float:
        return float(self.entries.sum())


# ==========================================
# 2. MEAN-FIELD TRAJECTORIES & TRACES
# ==========================================

@dataclass
class Trajectory:
    """Snapshots of the mean-field law p(t)."""
    times: np.ndarray
    states: List[Pmf]
    mass_defect: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.mass_defect = np.asarray(self.mass_defect, dtype=np.float64)
        if len(self.times) != len(self.states) or len(self.times) != len(self.mass_defect):
            raise ParameterError("Trajectory times, states and mass_defect must have equal lengths")
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError("Trajectory times must be strictly increasing")
        sizes = {state.weights.size for state in self.states}
        if len(sizes) > 1:
            raise ParameterError("Trajectory states must share one truncation index")

    def __len__(self) -> int:
        return len(self.times)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of the snapshot at time t (within tol)."""
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > tol:
            raise ParameterError(f"No snapshot at t={t}")
        return idx

    def state_at(self, t: float) -> Pmf:
        return self.states[self.index_of(t)]


@dataclass
class TraceSeries:
    """A scalar diagnostic recorded over time."""
    times: np.ndarray
    values: np.ndarray
    label: str = "value"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.shape != self.values.shape:
            raise ParameterError("TraceSeries times and values must have equal lengths")
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError("TraceSeries times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def window(self, start: float, end: float) -> "TraceSeries":
        mask = (self.times >= start) & (self.times <= end)
        return TraceSeries(self.times[mask], self.values[mask], self.label)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fits of a positive trace: exponential and power law."""
    exp_rate: float
    exp_r2: float
    poly_exponent: float
    poly_r2: float
    points: int

    def as_dict(self) -> Dict[str, float]:
        return {
            "exp_rate": self.exp_rate,
            "exp_r2": self.exp_r2,
            "poly_exponent": self.poly_exponent,
            "poly_r2": self.poly_r2,
            "points": self.points,
        }


@dataclass(frozen=True)
class SqrtEnvelope:
    """Smallest C with v(t) <= C / sqrt(t) over a window, and where it is attained."""
    constant: float
    anchor: float
    tail_ratio: float
    decreasing_after_anchor: bool

    def as_dict(self) -> Dict[str, float]:
        return {
            "constant": self.constant,
            "anchor": self.anchor,
            "tail_ratio": self.tail_ratio,
            "decreasing_after_anchor": self.decreasing_after_anchor,
        }


# ==========================================
# 3. AGENT SIMULATION
# ==========================================

@dataclass
class WealthState:
    """Wealth of N agents; integer dtype for the binomial rule, float otherwise."""
    values: np.ndarray
    total: float = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1:
            raise ParameterError("WealthState values must be a 1-D vector")
        if np.any(values < 0):
            raise ParameterError("Wealth must be nonnegative")
        if np.issubdtype(values.dtype, np.integer):
            values = values.astype(np.int64)
        else:
            values = values.astype(np.float64)
        self.values = values
        if self.total is None:
            # Python ints for integer wealth so the total cannot wrap around.
            self.total = sum(values.tolist()) if self.is_integer else float(values.sum())

    @property
    def N(self) -> int:
        return self.values.size

    @property
    def is_integer(self) -> bool:
        return np.issubdtype(self.values.dtype, np.integer)


@dataclass(frozen=True, eq=False)
class SimSnapshot:
    """One recorded point of an agent simulation."""
    event: int
    t_model: float
    pmf: Optional[Pmf]
    gini: float
    mean: float
    variance: float
    values: np.ndarray


@dataclass
class CoupledEnsemble:
    """M coupled pairs (x, xbar) sharing coins; partners are drawn from the ensemble."""
    x: np.ndarray
    xbar: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int64)
        self.xbar = np.asarray(self.xbar, dtype=np.int64)
        if self.x.shape != self.xbar.shape or self.x.ndim != 1:
            raise ParameterError("x and xbar must be 1-D vectors of equal length")
        if np.any(self.x < 0) or np.any(self.xbar < 0):
            raise ParameterError("Coupled wealths must be nonnegative")

    @property
    def M(self) -> int:
        return self.x.size

    @property
    def squared_gap(self) -> float:
        """Ensemble mean of (x - xbar)^2."""
        diff = (self.x - self.xbar).astype(np.float64)
        return float(np.mean(diff * diff))


@dataclass
class CouplingBand:
    """D(t) aggregated over replicas, with the large-time envelope for comparison."""
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    replicas: int


# ==========================================
# 4. EXACT CHAIN & GENERATING FUNCTIONS
# ==========================================

@dataclass
class ConfigSpace:
    """All compositions of `total` into N nonnegative parts, in lexicographic order."""
    N: int
    total: int
    states: np.ndarray
    index: Dict[Tuple[int, ...], int]

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass
class ExactChain:
    """Configuration space with its row-stochastic transition matrix."""
    space: ConfigSpace
    matrix: sparse.csr_matrix


@dataclass
class ASystemState:
    """Truncated state a_0..a_M of the generating-function dynamical system."""
    a: np.ndarray
    mu: float
    t: float = 0.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        if self.a.ndim != 1 or self.a.size == 0:
            raise ParameterError("a must be a non-empty 1-D vector")

    @property
    def M(self) -> int:
        return self.a.size - 1
