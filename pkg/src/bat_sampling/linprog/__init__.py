"""Feasibility programs for basis-aware acceptance, with float and exact solvers."""

from .bounded import TokenFamily, solve_each, solve_feasibility
from .exact import solve_feasibility_exact
from .program import (
    FeasibilityProgram,
    FeasibilityResult,
    SizeLimitError,
    Status,
    UnresolvedError,
)

__all__ = [
    "FeasibilityProgram",
    "FeasibilityResult",
    "SizeLimitError",
    "Status",
    "TokenFamily",
    "UnresolvedError",
    "solve_each",
    "solve_feasibility",
    "solve_feasibility_exact",
]
