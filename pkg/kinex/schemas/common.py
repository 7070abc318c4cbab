"""
Shared schema pieces.
"""
from typing import Any, List

from pydantic import BaseModel


class Violation(BaseModel):
    """One unmet precondition: which field, which constraint, which value."""
    field: str
    constraint: str
    value: Any = None

    def __str__(self) -> str:
        return f"{self.field}: {self.constraint} (got {self.value!r})"


def check(violations: List[Violation], ok: bool, field: str, constraint: str, value: Any) -> None:
    """Append a violation unless `ok`."""
    if not ok:
        violations.append(Violation(field=field, constraint=constraint, value=value))
