"""Per-step records of iterative schemes."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


class ConsistencyError(RuntimeError):
    """A quantity that must be monotone along a scheme was not."""

    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = ledger


class IterationLimitError(RuntimeError):
    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = ledger


@dataclass
class IterationLedger:
    """Rows of named floats, one per step, with fixed column order."""

    columns: tuple
    rows: list = field(default_factory=list)

    def append(self, **values):
        missing = set(self.columns) - set(values)
        if missing:
            raise KeyError(f"ledger row lacks {sorted(missing)}")
        self.rows.append({c: values[c] for c in self.columns})

    def column(self, name):
        return [r[name] for r in self.rows]

    def __len__(self):
        return len(self.rows)

    def check_monotone(self, name: str, direction: str, rel_slack: float = 1e-9, start: int = 0):
        """Index of the first step breaking monotonicity (None if monotone).

        ``direction`` is "up" (nondecreasing) or "down" (nonincreasing); the
        slack is relative to the larger magnitude of the two values compared.
        """
        vals = self.column(name)[start:]
        for k in range(1, len(vals)):
            a, b = vals[k - 1], vals[k]
            slack = rel_slack * max(abs(a), abs(b), 1e-300)
            if direction == "up" and b < a - slack:
                return start + k
            if direction == "down" and b > a + slack:
                return start + k
        return None


def digest(*arrays) -> str:
    """Short content hash identifying a check instance."""
    h = hashlib.sha1()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()[:12]


@dataclass
class CheckReport:
    """An evaluated inequality lhs <= rhs; passes when rhs - lhs >= -tol."""

    name: str
    lhs: float
    rhs: float
    tol: float = 0.0
    instance: str = ""
    details: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return float(self.rhs - self.lhs)

    @property
    def passed(self) -> bool:
        s = self.slack
        return bool(s == s and s >= -self.tol)

    def row(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack, "pass": self.passed}
