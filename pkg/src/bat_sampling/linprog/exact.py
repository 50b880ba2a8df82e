"""Exact rational phase-1 simplex, used as a test oracle for small programs.

Dense tableau over ``fractions.Fraction``; every structural starts at its
lower bound and Bland's rule picks entering and leaving variables. No
tolerances anywhere: a program is feasible iff the phase-1 optimum is 0.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .program import FeasibilityProgram, FeasibilityResult, SizeLimitError, Status

MAX_VARS = 64
MAX_BA_ROWS = 8


def to_fraction(x, snap: int | None = None) -> Fraction:
    """Exact rational value of ``x``; with ``snap`` rounds to multiples of 1/snap."""
    if isinstance(x, Fraction):
        f = x
    else:
        f = Fraction(float(x)) if not isinstance(x, int) else Fraction(x)
    if snap is not None:
        f = Fraction(round(f * snap), snap)
    return f


def solve_feasibility_exact(prog: FeasibilityProgram, snap: int | None = None) -> FeasibilityResult:
    n, m = prog.n_vars, prog.n_rows
    if n > MAX_VARS or m - 1 > MAX_BA_ROWS:
        raise SizeLimitError(
            f"exact oracle limited to v <= {MAX_VARS}, c <= {MAX_BA_ROWS} (got v={n}, c={m - 1})"
        )
    A = [[to_fraction(a, snap) for a in row] for row in np.asarray(prog.eq_lhs, dtype=object)]
    b = [to_fraction(x, snap) for x in np.asarray(prog.eq_rhs, dtype=object)]
    u = [to_fraction(x, snap) for x in np.asarray(prog.upper_bounds, dtype=object)]
    if prog.fixed_zero is not None:
        u[prog.fixed_zero] = Fraction(0)
    solver = _Tableau(A, b, u)
    it = solver.run()
    w = solver.phase1_objective()
    x = solver.structural_values()
    xf = np.array([float(v) for v in x])
    if w == 0:
        return FeasibilityResult(Status.FEASIBLE, xf, 0.0, w, it)
    return FeasibilityResult(Status.INFEASIBLE, None, float(w), w, it)


class _Tableau:
    def __init__(self, A, b, u):
        self.m = m = len(b)
        self.n = n = len(u)
        self.u = u + [None] * m  # None: no upper bound (artificials)
        self.value = [Fraction(0)] * (n + m)
        self.cost = [Fraction(0)] * n + [Fraction(1)] * m
        self.rows = []
        for k in range(m):
            s = 1 if b[k] >= 0 else -1
            row = [s * a for a in A[k]] + [Fraction(1 if j == k else 0) for j in range(m)]
            self.rows.append(row)
            self.value[n + k] = s * b[k]
        self.basis = list(range(n, n + m))
        self.retired = set()

    def phase1_objective(self) -> Fraction:
        return sum((self.value[self.n + k] for k in range(self.m)), Fraction(0))

    def structural_values(self):
        return self.value[: self.n]

    def _reduced_cost(self, j) -> Fraction:
        d = self.cost[j]
        for r, bv in enumerate(self.basis):
            if self.cost[bv]:
                d -= self.cost[bv] * self.rows[r][j]
        return d

    def _entering(self):
        basic = set(self.basis)
        for j in range(self.n + self.m):
            if j in basic or j in self.retired or self.u[j] == 0:
                continue
            d = self._reduced_cost(j)
            if self.value[j] == 0 and d < 0:
                return j, 1
            if self.u[j] is not None and self.value[j] == self.u[j] and d > 0:
                return j, -1
        return None, 0

    def run(self) -> int:
        it = 0
        while True:
            j, sigma = self._entering()
            if j is None:
                return it
            it += 1
            best = None
            for r, bv in enumerate(self.basis):
                g = sigma * self.rows[r][j]
                if g > 0:
                    t = self.value[bv] / g
                elif g < 0 and self.u[bv] is not None:
                    t = (self.u[bv] - self.value[bv]) / -g
                else:
                    continue
                if best is None or t < best[0] or (t == best[0] and bv < self.basis[best[1]]):
                    best = (t, r)
            step = self.u[j] if self.u[j] is not None else None
            if best is None or (step is not None and step <= best[0]):
                if step is None:
                    raise RuntimeError("unbounded phase-1 direction")
                self._move(j, sigma, step)
                continue
            t, r = best
            self._move(j, sigma, t)
            leaving = self.basis[r]
            if leaving >= self.n:
                self.retired.add(leaving)
            self._pivot(r, j)

    def _move(self, j, sigma, t):
        for r, bv in enumerate(self.basis):
            self.value[bv] -= sigma * self.rows[r][j] * t
        self.value[j] += sigma * t

    def _pivot(self, r, j):
        leaving = self.basis[r]
        if self.value[leaving] != 0 and self.u[leaving] is not None and self.value[leaving] != self.u[leaving]:
            raise AssertionError("leaving variable not at a bound")
        prow = self.rows[r]
        piv = prow[j]
        prow = [a / piv for a in prow]
        self.rows[r] = prow
        for k in range(self.m):
            if k != r and self.rows[k][j] != 0:
                f = self.rows[k][j]
                self.rows[k] = [a - f * p for a, p in zip(self.rows[k], prow)]
        self.basis[r] = j
