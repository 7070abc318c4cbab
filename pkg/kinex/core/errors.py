"""
Error types raised by the laboratory.
Every error derives from KinexError and from the closest builtin, so callers
can catch either the domain type or the plain Python one.
"""
from typing import Optional


class KinexError(Exception):
    """Base class for every error raised by kinex."""


class ParameterError(KinexError, ValueError):
    """An operation received an argument outside its domain."""


class ConfigurationError(KinexError, ValueError):
    """A run configuration cannot be executed as given."""


class PreconditionError(KinexError, ValueError):
    """Inputs are individually valid but violate a joint requirement."""


class UnreliableTailError(KinexError, ValueError):
    """Too much probability mass lies beyond the truncation to trust the result."""


class LogDomainError(KinexError, ValueError):
    """A logarithmic fit was asked to take the log of a nonpositive value."""


class InteriorPointError(KinexError, ValueError):
    """A centered difference was requested at the edge of a trajectory."""


class UndefinedError(KinexError, ZeroDivisionError):
    """The quantity is undefined for the given input (e.g. Gini of zero wealth)."""


class ChainSizeError(KinexError, ValueError):
    """The configuration space is too large to enumerate."""

    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(
            f"Configuration space has {count} states, above the limit of {limit}"
        )


class TruncationError(KinexError, ArithmeticError):
    """Mass leaked past the truncation index beyond tolerance."""

    def __init__(self, time: float, defect: float, tolerance: float):
        self.time = time
        self.defect = defect
        self.tolerance = tolerance
        super().__init__(
            f"Mass defect {defect:.3e} exceeds {tolerance:.1e} at t={time:g}; "
            "increase the truncation index K"
        )


class NumericalError(KinexError, ArithmeticError):
    """An iterative computation diverged, stalled or left its invariant set."""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        super().__init__(message)


class ConservationError(KinexError, AssertionError):
    """Total wealth drifted during a simulation."""

    def __init__(self, expected: float, actual: float, event: int):
        self.expected = expected
        self.actual = actual
        self.event = event
        super().__init__(
            f"Total wealth changed from {expected!r} to {actual!r} by event {event}"
        )
