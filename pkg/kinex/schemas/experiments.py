"""
Pydantic schemas for command-line experiments.
One parameter block per command; ExperimentConfig carries all of them and the
command decides which block is read and validated.
"""
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field
from scipy.special import comb

from kinex.schemas.common import Violation, check
from kinex.schemas.meanfield import OdeConfig
from kinex.schemas.simulation import SimConfig

Command = Literal["simulate", "meanfield", "couple", "chain", "laplace", "metrics", "reproduce"]
LawKind = Literal["dirac", "poisson", "binomial", "tilted_uniform", "file"]
Figure = Literal["fig1", "fig4", "fig5", "rules"]

# Same limit as the exact-chain enumerator.
MAX_CHAIN_STATES = 2_000_000
# Support bound of a tilted uniform law when none is given.
TILTED_DEFAULT_K = 10
# Same tolerance as the coupling precondition.
MEAN_TOLERANCE = 1e-6


class InitialLaw(BaseModel):
    """
    Initial law for the mean-field side.
    dirac: point mass at k. poisson: Poisson(lam) cut at K (a tail below 1e-30 by default).
    binomial: Binomial(n, gamma). tilted_uniform: law on {0..K} with the given mean, K = 10
    by default. file: Pmf JSON written by kinex.
    """
    kind: LawKind = "dirac"
    k: Optional[int] = 5
    lam: Optional[float] = None
    n: Optional[int] = None
    gamma: Optional[float] = None
    K: Optional[int] = None
    mean: Optional[float] = None
    path: Optional[str] = None

    def violations(self, prefix: str = "initial.") -> List[Violation]:
        out: List[Violation] = []
        if self.kind == "dirac":
            check(out, self.k is not None and self.k >= 0, f"{prefix}k", "k ≥ 0", self.k)
        elif self.kind == "poisson":
            check(out, self.lam is not None and self.lam > 0, f"{prefix}lambda", "lambda > 0", self.lam)
        elif self.kind == "binomial":
            check(out, self.n is not None and self.n >= 0, f"{prefix}n", "n ≥ 0", self.n)
            check(out, self.gamma is not None and 0 <= self.gamma <= 1, f"{prefix}gamma",
                  "0 ≤ gamma ≤ 1", self.gamma)
        elif self.kind == "tilted_uniform":
            K = self.tilted_K
            check(out, K >= 1, f"{prefix}K", "K ≥ 1", K)
            check(out, self.mean is not None and (K < 1 or 0 < self.mean < K),
                  f"{prefix}mean", "0 < mean < K", self.mean)
        else:
            check(out, bool(self.path), f"{prefix}path", "path to a Pmf JSON file", self.path)
        return out

    @property
    def tilted_K(self) -> int:
        return self.K if self.K is not None else TILTED_DEFAULT_K

    def nominal_mean(self) -> Optional[float]:
        """Mean of the untruncated law, or None for a file that has not been read yet."""
        if self.kind == "dirac" and self.k is not None:
            return float(self.k)
        if self.kind == "poisson":
            return self.lam
        if self.kind == "binomial" and self.n is not None and self.gamma is not None:
            return self.n * self.gamma
        if self.kind == "tilted_uniform":
            return self.mean
        return None


class MeanfieldParams(BaseModel):
    initial: InitialLaw = Field(default_factory=InitialLaw)
    ode: OdeConfig = Field(default_factory=OdeConfig)
    # Poisson rate of the comparison target; defaults to the initial mean.
    target_lambda: Optional[float] = None

    def violations(self, prefix: str = "meanfield.") -> List[Violation]:
        out = self.initial.violations(f"{prefix}initial.")
        out.extend(self.ode.violations(f"{prefix}ode."))
        if self.target_lambda is not None:
            check(out, self.target_lambda > 0, f"{prefix}target_lambda", "lambda > 0", self.target_lambda)
        return out


class CouplingParams(BaseModel):
    initial: InitialLaw = Field(
        default_factory=lambda: InitialLaw(kind="tilted_uniform", K=10, mean=5.15)
    )
    lam: Optional[float] = None
    M: int = 20_000
    t_end: float = 20.0
    replicas: int = 8
    points: int = 41

    def violations(self, prefix: str = "couple.") -> List[Violation]:
        out = self.initial.violations(f"{prefix}initial.")
        if self.lam is not None:
            check(out, self.lam > 0, f"{prefix}lambda", "lambda > 0", self.lam)
            law_mean = self.initial.nominal_mean()
            if law_mean is not None:
                check(out, abs(law_mean - self.lam) <= MEAN_TOLERANCE, f"{prefix}lambda",
                      "lambda = mean of the initial law", self.lam)
        check(out, self.M >= 2, f"{prefix}M", "M ≥ 2", self.M)
        check(out, self.t_end > 0, f"{prefix}t_end", "t_end > 0", self.t_end)
        check(out, self.replicas >= 2, f"{prefix}replicas", "replicas ≥ 2", self.replicas)
        check(out, self.points >= 2, f"{prefix}points", "points ≥ 2", self.points)
        return out


class ChainParams(BaseModel):
    N: int = 3
    total: int = 10

    def violations(self, prefix: str = "chain.") -> List[Violation]:
        out: List[Violation] = []
        check(out, self.N >= 2, f"{prefix}N", "N ≥ 2", self.N)
        check(out, self.total >= 0, f"{prefix}total", "total ≥ 0", self.total)
        if self.N >= 2 and self.total >= 0:
            count = int(comb(self.total + self.N - 1, self.N - 1, exact=True))
            check(out, count <= MAX_CHAIN_STATES, f"{prefix}N,total",
                  f"C(total+N-1, N-1) ≤ {MAX_CHAIN_STATES}", count)
        return out


class LaplaceParams(BaseModel):
    initial: InitialLaw = Field(default_factory=InitialLaw)
    t_end: float = 40.0
    M: int = 24
    dt: float = 0.01
    mu_low: Optional[float] = None
    mu_high: Optional[float] = None

    def violations(self, prefix: str = "laplace.") -> List[Violation]:
        out = self.initial.violations(f"{prefix}initial.")
        check(out, self.t_end > 0, f"{prefix}t_end", "t_end > 0", self.t_end)
        check(out, self.M >= 0, f"{prefix}M", "M ≥ 0", self.M)
        check(out, 0 < self.dt <= 0.1, f"{prefix}dt", "0 < dt ≤ 0.1", self.dt)
        if self.mu_low is not None and self.mu_high is not None:
            check(out, self.mu_low <= self.mu_high, f"{prefix}mu_low,mu_high", "mu_low ≤ mu_high",
                  (self.mu_low, self.mu_high))
        return out


class MetricsParams(BaseModel):
    """Paths to inputs: two Pmf JSON files, a `t,value` trace CSV, or a `value` wealth CSV."""
    p: Optional[str] = None
    q: Optional[str] = None
    trace: Optional[str] = None
    window: Optional[Tuple[float, float]] = None
    wealth: Optional[str] = None

    def violations(self, prefix: str = "metrics.") -> List[Violation]:
        out: List[Violation] = []
        check(out, (self.p is None) == (self.q is None), f"{prefix}p,q",
              "p and q are given together", (self.p, self.q))
        check(out, any(v is not None for v in (self.p, self.trace, self.wealth)), f"{prefix}inputs",
              "at least one of p/q, trace or wealth", None)
        if self.window is not None:
            check(out, self.window[0] < self.window[1], f"{prefix}window", "start < end", self.window)
        return out


class ReproduceParams(BaseModel):
    figure: Figure = "fig4"
    n: int = 10_000
    events: int = 10_000_000
    snapshot_every: int = 1_000_000
    lam: float = 5.0
    t_end: Optional[float] = None
    s: float = 0.5

    def violations(self, prefix: str = "reproduce.") -> List[Violation]:
        out: List[Violation] = []
        check(out, self.n >= 2, f"{prefix}n", "N ≥ 2", self.n)
        check(out, self.events >= 1, f"{prefix}events", "events ≥ 1", self.events)
        check(out, self.snapshot_every >= 1, f"{prefix}snapshot_every", "snapshot_every ≥ 1",
              self.snapshot_every)
        check(out, self.lam > 0, f"{prefix}lambda", "lambda > 0", self.lam)
        if self.t_end is not None:
            check(out, self.t_end > 0, f"{prefix}t_end", "t_end > 0", self.t_end)
        check(out, 0 <= self.s <= 1, f"{prefix}s", "0 ≤ s ≤ 1", self.s)
        return out


class ExperimentConfig(BaseModel):
    """A fully resolved command: which experiment, its parameters, seed and output location."""
    command: Command
    seed: int = 0
    output_dir: Optional[str] = None
    replicas: int = 1
    workers: Optional[int] = None
    simulate: SimConfig = Field(default_factory=SimConfig)
    meanfield: MeanfieldParams = Field(default_factory=MeanfieldParams)
    couple: CouplingParams = Field(default_factory=CouplingParams)
    chain: ChainParams = Field(default_factory=ChainParams)
    laplace: LaplaceParams = Field(default_factory=LaplaceParams)
    metrics: MetricsParams = Field(default_factory=MetricsParams)
    reproduce: ReproduceParams = Field(default_factory=ReproduceParams)

    def block(self) -> BaseModel:
        """Parameter block of the active command."""
        return getattr(self, self.command)

    def resolved(self) -> dict:
        """Command, seed and active block only: what the manifest records."""
        return {
            "command": self.command,
            "seed": self.seed,
            "replicas": self.replicas,
            self.command: self.block().model_dump(mode="json"),
        }
