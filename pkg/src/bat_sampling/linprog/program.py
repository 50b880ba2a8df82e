from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Status(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


class UnresolvedError(RuntimeError):
    """The solver hit its iteration cap before deciding feasibility."""


class SizeLimitError(ValueError):
    pass


@dataclass(frozen=True)
class FeasibilityProgram:
    """Find p with p[fixed_zero] = 0, 0 <= p <= upper_bounds, eq_lhs @ p = eq_rhs.

    Row 0 of ``eq_lhs`` is the all-ones simplex row with right-hand side 1.
    ``start`` is an optional warm-start point for the float solver; it does
    not change the feasible set.
    """

    upper_bounds: np.ndarray
    eq_lhs: np.ndarray
    eq_rhs: np.ndarray
    fixed_zero: int | None = None
    start: np.ndarray | None = None

    def __post_init__(self):
        u = np.asarray(self.upper_bounds)
        A = np.asarray(self.eq_lhs)
        b = np.asarray(self.eq_rhs)
        if A.ndim != 2 or A.shape[1] != u.shape[0] or b.shape != (A.shape[0],):
            raise ValueError("inconsistent program shapes")
        if np.any(u < 0):
            raise ValueError("upper bounds must be non-negative")
        if not (np.all(A[0] == 1) and b[0] == 1):
            raise ValueError("row 0 must be the simplex constraint sum(p) = 1")
        if self.fixed_zero is not None and not 0 <= self.fixed_zero < u.shape[0]:
            raise ValueError("fixed_zero out of range")

    @property
    def n_vars(self) -> int:
        return len(self.upper_bounds)

    @property
    def n_rows(self) -> int:
        return len(self.eq_rhs)

    def effective_upper(self) -> np.ndarray:
        u = np.array(self.upper_bounds, dtype=np.float64)
        if self.fixed_zero is not None:
            u[self.fixed_zero] = 0.0
        return u

    def with_fixed_zero(self, token: int | None) -> "FeasibilityProgram":
        return FeasibilityProgram(self.upper_bounds, self.eq_lhs, self.eq_rhs, token, self.start)

    def violation(self, p) -> float:
        """Largest equality residual or bound violation of ``p``."""
        p = np.asarray(p, dtype=np.float64)
        u = self.effective_upper()
        eq = np.abs(np.asarray(self.eq_lhs, dtype=np.float64) @ p - self.eq_rhs).max()
        return float(max(eq, (-p).max(), (p - u).max()))


@dataclass(frozen=True)
class FeasibilityResult:
    status: Status
    witness: np.ndarray | None
    residual: float
    phase1_objective: float
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE
