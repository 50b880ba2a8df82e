"""Phase-1 bounded-variable revised simplex in floating point.

Variables keep their box 0 <= p_j <= u_j natively, so the basis only ever has
one column per equality row.

Nonbasic variables may start strictly inside their box (a warm start such
as the model distribution itself). Such a variable moves at most once before
it reaches a bound or enters the basis, so the usual termination argument is
unaffected. A move that ends on the variable's own bound leaves the basis,
and hence the reduced costs, unchanged; a run of consecutive such moves is
applied in one vectorized pass.

Pricing: ``"bland"`` takes the lowest eligible index. ``"greedy"`` (the
default) ranks eligible columns by |reduced cost| times the room they have
to move, and falls back to Bland's rule once DEGENERATE_RUN degenerate
pivots happen in a row, which keeps the anti-cycling guarantee. On wide
programs greedy pricing is partial: between full pricing rounds (at most
FULL_PRICE_EVERY pivots apart, and whenever the set runs dry) only a
working set of the WORKING_SET best-scoring columns is priced. Bland's rule
always prices every column.

Every iteration also evaluates the Lagrangian lower bound of the phase-1
problem at the current simplex multipliers,

    g(y) = b.y - sum_j u_j max(0, A_j.y),   |y|_inf <= 1,

and stops with INFEASIBLE as soon as it exceeds ``tol``: the phase-1
optimum is then provably above ``tol`` without walking to the optimal basis.
"""

from __future__ import annotations

import numpy as np

from .program import (
    FeasibilityProgram,
    FeasibilityResult,
    Status,
    UnresolvedError,
)

PIVOT_TOL = 1e-11
COST_TOL = 1e-11
BOUND_TOL = 1e-11
TIE_TOL = 1e-12
CHUNK = 256
REFACTOR_EVERY = 32
DEGENERATE_RUN = 20
WORKING_SET = 512
FULL_PRICE_EVERY = 64
PRICING_RULES = ("greedy", "bland")


def iteration_cap(prog: FeasibilityProgram) -> int:
    return 50 * (prog.n_vars + prog.n_rows - 1)


def solve_feasibility(
    prog: FeasibilityProgram,
    tol: float = 1e-8,
    max_iter: int | None = None,
    pricing: str = "greedy",
) -> FeasibilityResult:
    """Decide whether ``prog`` has a feasible point.

    FEASIBLE (with a witness) when the phase-1 objective reaches <= ``tol``;
    INFEASIBLE when the phase-1 optimum is shown to exceed ``tol``.
    Raises UnresolvedError past the iteration cap.
    """
    _check_args(tol, pricing)
    A = np.asarray(prog.eq_lhs, dtype=np.float64)
    b = np.asarray(prog.eq_rhs, dtype=np.float64)
    u = prog.effective_upper()
    x = u.copy() if prog.start is None else np.minimum(np.maximum(prog.start, 0.0), u)
    cap = iteration_cap(prog) if max_iter is None else max_iter
    return _phase1(A, b, u, x, b - A @ x, tol, cap, pricing == "greedy")


class TokenFamily:
    """The programs ``prog.with_fixed_zero(i)`` for all tokens i.

    They share every row and bound except the fixed-zero index, so array
    preparation is done once.
    """

    def __init__(self, prog: FeasibilityProgram, tol: float = 1e-8,
                 max_iter: int | None = None, pricing: str = "greedy"):
        _check_args(tol, pricing)
        self.program = prog
        self.A = np.asarray(prog.eq_lhs, dtype=np.float64)
        self.b = np.asarray(prog.eq_rhs, dtype=np.float64)
        self.u = np.array(prog.upper_bounds, dtype=np.float64)
        if prog.start is None:
            self.x = self.u
        else:
            self.x = np.minimum(np.maximum(prog.start, 0.0), self.u)
        self.r = self.b - self.A @ self.x
        self.tol = tol
        self.cap = iteration_cap(prog) if max_iter is None else max_iter
        self.greedy = pricing == "greedy"

    def solve(self, i: int) -> FeasibilityResult:
        u = self.u.copy()
        u[i] = 0.0
        x = self.x.copy()
        x[i] = 0.0
        r0 = self.r + self.A[:, i] * self.x[i]
        return _phase1(self.A, self.b, u, x, r0, self.tol, self.cap, self.greedy)

    def decide(self, tokens) -> np.ndarray:
        """Feasibility flag per token.

        With greedy pricing the first pricing round, which every token whose
        initial residual has the same sign pattern shares, is run for all of
        them at once; only tokens it leaves undecided get a full solve.
        """
        tokens = np.asarray(tokens, dtype=np.intp)
        feasible = np.zeros(tokens.size, dtype=bool)
        pending = np.ones(tokens.size, dtype=bool)
        if self.greedy and tokens.size:
            self._first_round(tokens, feasible, pending)
        for k in np.flatnonzero(pending):
            feasible[k] = self.solve(int(tokens[k])).feasible
        return feasible

    def _first_round(self, tokens, feasible, pending, budget=1 << 22):
        A, b, u, x, tol = self.A, self.b, self.u, self.x, self.tol
        m, n = A.shape
        R = self.r[:, None] + A[:, tokens] * x[tokens]
        S = np.where(R >= 0, 1.0, -1.0)
        XB = np.abs(R)
        patterns, inverse = np.unique(S.T, axis=0, return_inverse=True)
        for g, s in enumerate(patterns):
            sel = np.flatnonzero(inverse.ravel() == g)
            toks, xb = tokens[sel], XB[:, sel]
            done = xb.sum(axis=0) <= 1e-3 * tol
            feasible[sel[done]] = True
            pending[sel[done]] = False
            d = s @ A
            dpos = np.maximum(d, 0.0)
            bound = (b @ s - u @ dpos) + u[toks] * dpos[toks]
            out = ~done & (bound > tol)
            pending[sel[out]] = False
            keep = ~done & ~out
            sel, toks, xb = sel[keep], toks[keep], xb[:, keep]
            if sel.size == 0:
                continue

            up = (d > COST_TOL) & (x < u)
            down = (d < -COST_TOL) & (x > 0)
            room = np.where(up, u - x, x)
            order = np.flatnonzero(up | down)
            order = order[np.argsort(room[order] * -np.abs(d[order]), kind="stable")]
            E = order.size
            if E == 0:
                continue
            where = np.full(n, -1)
            where[order] = np.arange(E)
            sg = np.where(up[order], 1.0, -1.0)
            alpha = s[:, None] * A[:, order]  # basis is diag(s)
            step = alpha * (sg * room[order])
            C = np.cumsum(step, axis=1)
            block = max(1, budget // (m * E))
            for lo in range(0, sel.size, block):
                self._first_round_block(
                    sel[lo:lo + block], toks[lo:lo + block], xb[:, lo:lo + block],
                    where, order, sg, alpha, step, C, room, feasible, pending)

    def _first_round_block(self, sel, toks, xb, where, order, sg, alpha, step, C, room,
                           feasible, pending):
        m, E = C.shape
        pos = where[toks]
        own = np.where(pos >= 0, step[:, np.maximum(pos, 0)], 0.0)  # m x k
        after_own = np.arange(E)[:, None] >= np.where(pos >= 0, pos, E)[None, :]
        states = xb[:, None, :] - (C[:, :, None] - after_own[None, :, :] * own[:, None, :])
        bad = (states < -BOUND_TOL).any(axis=0)  # E x k
        any_bad = bad.any(axis=0)
        first = bad.argmax(axis=0)

        # every eligible column moved without crossing: no candidates remain
        end_w = states[:, -1, :].sum(axis=0)
        clean = ~any_bad
        feasible[sel[clean]] = end_w[clean] <= self.tol
        pending[sel[clean]] = False

        hit = np.flatnonzero(any_bad)
        e = first[hit]
        before = np.where(e > 0, states[:, np.maximum(e - 1, 0), hit], xb[:, hit])
        gk = alpha[:, e] * sg[e]
        span = room[order[e]]
        ratios = np.full(gk.shape, np.inf)
        dec = gk > PIVOT_TOL
        ratios[dec] = np.maximum(before[dec] / gk[dec], 0.0)
        t_star = ratios.min(axis=0)
        pivot = span > t_star
        leave = (ratios <= t_star + TIE_TOL).argmax(axis=0)
        after = before - gk * np.where(np.isfinite(t_star), t_star, 0.0)
        after[leave, np.arange(hit.size)] = 0.0
        w = after.sum(axis=0)
        ok = pivot & np.isfinite(t_star) & (w <= 1e-3 * self.tol)
        feasible[sel[hit[ok]]] = True
        pending[sel[hit[ok]]] = False


def solve_each(
    prog: FeasibilityProgram,
    tokens,
    tol: float = 1e-8,
    max_iter: int | None = None,
    pricing: str = "greedy",
) -> list[FeasibilityResult]:
    """Solve ``prog.with_fixed_zero(i)`` for every ``i`` in ``tokens``."""
    family = TokenFamily(prog, tol, max_iter, pricing)
    return [family.solve(int(i)) for i in tokens]


def _check_args(tol, pricing):
    if tol <= 0:
        raise ValueError("tol must be positive")
    if pricing not in PRICING_RULES:
        raise ValueError(f"unknown pricing rule {pricing!r}")


def _phase1(A, b, u, x, r0, tol, cap, greedy) -> FeasibilityResult:
    """Core loop; ``x`` holds nonbasic values and is updated in place."""
    m, n = A.shape
    sign = np.where(r0 >= 0, 1.0, -1.0)
    basis = np.arange(n, n + m)
    B = np.zeros((m, m))
    B.flat[::m + 1] = sign
    Binv = B.copy()
    nonbasic = np.ones(n, dtype=bool)
    xB = np.abs(r0)
    cB = np.ones(m)  # phase-1 cost of the basic variables
    ub = np.full(m, np.inf)
    stop_at = 1e-3 * tol
    it = since_refactor = degenerate = 0
    bound = -np.inf
    partial = greedy and n > 4 * WORKING_SET
    work = Aw = None  # columns priced between full pricing rounds
    rounds = 0

    while True:
        if since_refactor >= REFACTOR_EVERY:
            Binv = np.linalg.inv(B)
            since_refactor = 0
            xB = Binv @ (b - A @ np.where(nonbasic, x, 0.0))
        if cB @ xB <= stop_at:
            break

        y = cB @ Binv
        bland = not greedy or degenerate >= DEGENERATE_RUN
        full = work is None or bland or rounds >= FULL_PRICE_EVERY
        cols = slice(None) if full else work
        d = y @ (A if full else Aw)  # the reduced cost of structural j is -d[j]
        if full:
            bound = (b @ y - u @ np.maximum(d, 0.0)) / max(1.0, np.abs(y).max())
            if bound > tol:
                break

        xv, uv = x[cols], u[cols]
        up = d > COST_TOL
        up &= xv < uv
        down = d < -COST_TOL
        down &= xv > 0
        up_or_down = up | down
        up_or_down &= nonbasic[cols]
        cand = up_or_down.nonzero()[0]  # positions within ``cols``
        if cand.size == 0:
            if full:
                break
            work = None
            continue
        room = np.where(up, uv - xv, xv)
        if not bland:
            score = room[cand] * -np.abs(d[cand])
            if full and partial:
                keep = cand if cand.size <= WORKING_SET else cand[np.argpartition(score, WORKING_SET)[:WORKING_SET]]
                work = np.sort(keep)
                Aw = A[:, work]
                rounds = 0
            if cand.size > CHUNK:
                top = np.argpartition(score, CHUNK)[:CHUNK]
                cand = cand[top[score[top].argsort(kind="stable")]]
            else:
                cand = cand[score.argsort(kind="stable")]
        rounds += 1
        index = cand if full else work[cand]

        for pos in range(0, cand.size, CHUNK):
            local = cand[pos:pos + CHUNK]
            chunk = index[pos:pos + CHUNK]
            alpha = Binv @ A[:, chunk]
            sg = np.where(up[local], 1.0, -1.0)
            span = room[local]
            states = xB[:, None] - np.cumsum(alpha * (sg * span), axis=1)
            bad = states < -BOUND_TOL
            bad |= states > ub[:, None] + BOUND_TOL
            bad = bad.any(axis=0)
            t = int(bad.argmax())
            if not bad[t]:
                t = chunk.size
            if t > 0:
                moved = chunk[:t]
                x[moved] = np.where(sg[:t] > 0, u[moved], 0.0)
                xB = states[:, t - 1].copy()
                it += t
            if t < chunk.size:
                j = int(chunk[t])
                col = alpha[:, t]
                g = sg[t] * col
                r, step = _ratio_test(g, span[t], xB, ub, basis)
                xB -= g * step
                if r is None:
                    x[j] = u[j] if sg[t] > 0 else 0.0
                else:
                    degenerate = degenerate + 1 if step <= TIE_TOL else 0
                    leaving = basis[r]
                    if leaving < n:
                        nonbasic[leaving] = True
                        x[leaving] = u[leaving] if g[r] < 0 else 0.0
                    xB[r] = x[j] + sg[t] * step
                    basis[r] = j
                    nonbasic[j] = False
                    cB[r] = 0.0
                    ub[r] = u[j]
                    B[:, r] = A[:, j]
                    row = Binv[r] / col[r]
                    Binv -= np.outer(col, row)
                    Binv[r] = row
                    since_refactor += 1
                it += 1
                break
            if it > cap:
                break
        if it > cap:
            raise UnresolvedError(f"iteration cap {cap} exceeded")

    if bound > tol:
        # certified by the Lagrangian bound; no need to refine the iterate
        return FeasibilityResult(Status.INFEASIBLE, None, float(bound), float(bound), it)
    rhs = b - A @ np.where(nonbasic, x, 0.0)
    result = _finish(A, b, u, x, Binv @ rhs, basis, tol, it)
    if result.feasible and result.residual > tol:
        # drift in the updated inverse: redo with a fresh factorization
        result = _finish(A, b, u, x, np.linalg.solve(B, rhs), basis, tol, it)
    return result


def _finish(A, b, u, x, xB, basis, tol, it) -> FeasibilityResult:
    n = x.size
    struct = basis < n
    x[basis[struct]] = xB[struct]
    w = float(np.maximum(xB[~struct], 0.0).sum())
    if w > tol:
        return FeasibilityResult(Status.INFEASIBLE, None, w, w, it)
    residual = float(max(np.abs(A @ x - b).max(), -x.min(), (x - u).max()))
    p = np.minimum(np.maximum(x, 0.0), u)
    p /= p.sum()
    return FeasibilityResult(Status.FEASIBLE, p, residual, w, it)


def _ratio_test(g, span, xB, ub, basis):
    """Leaving row and step length when basic values change at rate ``-g``.

    Returns ``(None, span)`` when the entering variable reaches its own
    bound first. Plain Python: the vectors have only 1 + c entries.
    """
    ratios = []
    for gk, xk, uk in zip(g.tolist(), xB.tolist(), ub.tolist()):
        if gk > PIVOT_TOL:
            ratios.append(max(xk / gk, 0.0))
        elif gk < -PIVOT_TOL:
            ratios.append(max((uk - xk) / -gk, 0.0))
        else:
            ratios.append(np.inf)
    t_star = min(ratios)
    if span <= t_star:
        return None, span
    ties = [(int(bk), k) for k, (bk, rk) in enumerate(zip(basis.tolist(), ratios))
            if rk <= t_star + TIE_TOL]
    return min(ties)[1], t_star
