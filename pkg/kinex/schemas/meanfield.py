"""
Pydantic schemas for the mean-field solver.
"""
from typing import List, Optional

from pydantic import BaseModel

from kinex.schemas.common import Violation, check


class OdeConfig(BaseModel):
    """Fixed-step RK4 settings. K=None picks the Poisson-tail default at run start."""
    K: Optional[int] = None
    dt: float = 0.01
    t_end: float = 1.5
    snapshot_times: Optional[List[float]] = None

    def violations(self, prefix: str = "") -> List[Violation]:
        out: List[Violation] = []
        check(out, 0 < self.dt <= 0.1, f"{prefix}dt", "0 < dt ≤ 0.1", self.dt)
        check(out, self.t_end > 0, f"{prefix}t_end", "t_end > 0", self.t_end)
        if self.K is not None:
            check(out, 0 <= self.K <= 512, f"{prefix}K", "0 ≤ K ≤ 512", self.K)
        if self.snapshot_times:
            times = self.snapshot_times
            check(out, all(0 <= t <= self.t_end for t in times), f"{prefix}snapshot_times",
                  "snapshot_times ⊆ [0, t_end]", times)
            check(out, all(b > a for a, b in zip(times, times[1:])), f"{prefix}snapshot_times",
                  "snapshot_times strictly ascending", times)
        return out
