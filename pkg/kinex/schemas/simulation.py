"""
Pydantic schemas for the agent simulator.
"""
from typing import List, Literal, Optional

from pydantic import BaseModel, Field

from kinex.schemas.common import Violation, check

RuleKind = Literal["binomial", "uniform", "repeated_average", "saving"]
InitialKind = Literal["dirac", "uniform_range", "custom"]
TimeConvention = Literal["discrete", "poisson_clock"]

# Largest total wealth accepted for integer rules (keeps every pair sum inside int64).
MAX_TOTAL_WEALTH = 2 ** 62


class ExchangeRule(BaseModel):
    """Update rule. `s` is the reshuffled fraction of the saving rule (kept fraction is 1 - s)."""
    kind: RuleKind = "binomial"
    s: Optional[float] = None

    @property
    def integer_valued(self) -> bool:
        return self.kind == "binomial"

    def violations(self, prefix: str = "rule.") -> List[Violation]:
        out: List[Violation] = []
        if self.kind == "saving":
            check(out, self.s is not None, f"{prefix}s", "s is required for the saving rule", self.s)
            if self.s is not None:
                check(out, 0.0 <= self.s <= 1.0, f"{prefix}s", "0 ≤ s ≤ 1", self.s)
        else:
            check(out, self.s is None, f"{prefix}s", "s is only allowed for the saving rule", self.s)
        return out


class InitialCondition(BaseModel):
    """
    Named initial wealth profile.
    dirac: every agent holds k. uniform_range: agents cycle through a..b (mean (a+b)/2).
    custom: explicit vector of length N.
    """
    kind: InitialKind = "uniform_range"
    k: Optional[float] = None
    a: Optional[float] = 0
    b: Optional[float] = 10
    values: Optional[List[float]] = None

    def violations(self, N: int, integer_valued: bool, prefix: str = "initial.") -> List[Violation]:
        out: List[Violation] = []
        if self.kind == "dirac":
            check(out, self.k is not None and self.k >= 0, f"{prefix}k", "k ≥ 0", self.k)
            if integer_valued and self.k is not None:
                check(out, float(self.k).is_integer(), f"{prefix}k",
                      "integer wealth for the binomial rule", self.k)
        elif self.kind == "uniform_range":
            ok = self.a is not None and self.b is not None and 0 <= self.a <= self.b
            check(out, ok, f"{prefix}a,b", "0 ≤ a ≤ b", (self.a, self.b))
            if integer_valued and ok:
                check(out, float(self.a).is_integer() and float(self.b).is_integer(),
                      f"{prefix}a,b", "integer bounds for the binomial rule", (self.a, self.b))
        else:
            values = self.values or []
            check(out, len(values) == N, f"{prefix}values", f"exactly N={N} entries", len(values))
            check(out, all(v >= 0 for v in values), f"{prefix}values", "all values ≥ 0", min(values, default=None))
            if integer_valued:
                check(out, all(float(v).is_integer() for v in values), f"{prefix}values",
                      "integer wealth for the binomial rule", None)
        return out


class SimConfig(BaseModel):
    """One agent-simulation run."""
    N: int = 10_000
    rule: ExchangeRule = Field(default_factory=ExchangeRule)
    initial: InitialCondition = Field(default_factory=InitialCondition)
    seed: int = 0
    events: int = 10_000_000
    snapshot_every: int = 1_000_000
    time_convention: TimeConvention = "discrete"

    def violations(self, prefix: str = "") -> List[Violation]:
        out: List[Violation] = []
        check(out, self.N >= 2, f"{prefix}N", "N ≥ 2", self.N)
        check(out, self.events >= 1, f"{prefix}events", "events ≥ 1", self.events)
        check(out, self.snapshot_every >= 1, f"{prefix}snapshot_every", "snapshot_every ≥ 1",
              self.snapshot_every)
        check(out, 0 <= self.seed < 2 ** 64, f"{prefix}seed", "0 ≤ seed < 2^64", self.seed)
        out.extend(self.rule.violations(f"{prefix}rule."))
        if self.N >= 2:
            out.extend(self.initial.violations(self.N, self.rule.integer_valued, f"{prefix}initial."))
        return out
