"""Bottleneck lab: synthetic true distributions, hidden-state fits, EYM
residuals, log-underestimation and the rank of truncated distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import RANK_RTOL, numeric_rank, singular_values
from .prob import as_distribution, log_softmax, make_rng
from .truncation import TruncationRule, threshold_for, truncate

SENTINEL = -1e4
ARMIJO_C = 1e-4
BACKTRACK = 0.5
MAX_HALVINGS = 60


class NumericalError(ArithmeticError):
    """An iteration produced non-finite values it could not recover from."""


@dataclass(frozen=True)
class CondDistMatrix:
    """v x n matrix of log-probabilities; column j is the distribution for prefix j."""

    entries: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.entries, dtype=np.float64)
        if A.ndim != 2:
            raise ValueError("expected a v x n matrix")
        if np.any(np.isnan(A)) or np.any(A > 0) or np.any(A == np.inf):
            raise ValueError("log-probabilities must be <= 0 (or -inf)")
        sums = np.exp(A).sum(axis=0)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("columns do not exponentiate to distributions")
        object.__setattr__(self, "entries", A)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def probs(self) -> np.ndarray:
        return np.exp(self.entries)

    def column(self, j: int) -> np.ndarray:
        return np.exp(self.entries[:, j])


def _entries(A) -> np.ndarray:
    return A.entries if isinstance(A, CondDistMatrix) else np.asarray(A, dtype=np.float64)


def synth_true_matrix(v: int, n: int, support_frac: float, seed: int) -> CondDistMatrix:
    """Columns with ceil(support_frac * v) positive entries and exact zeros elsewhere."""
    if v < 2 or n < 1:
        raise ValueError("need v >= 2 and n >= 1")
    if not 0.0 < support_frac <= 1.0:
        raise ValueError("support_frac must lie in (0, 1]")
    k = max(1, math.ceil(round(support_frac * v, 9)))
    rng = make_rng(seed)
    A = np.full((v, n), -np.inf)
    for j in range(n):
        support = rng.choice(v, size=k, replace=False)
        A[support, j] = log_softmax(rng.standard_normal(k))
    return CondDistMatrix(A)


@dataclass(frozen=True)
class FitReport:
    h: np.ndarray
    iterations: int
    grad_norm: float
    ce: float
    objective_trace: tuple = field(default=(), repr=False, compare=False)


def _objective(z: np.ndarray, m: np.ndarray, h: np.ndarray) -> float:
    """log sum exp(z) - m.h with z = W h and m = W^T p*."""
    top = z.max()
    return float(top + math.log(np.exp(z - top).sum()) - m @ h)


def fit_hidden_state(W, p_star, tol: float = 1e-10, max_iter: int = 200) -> FitReport:
    """Minimize CE(softmax(W h), p*) over h by damped Newton from h = 0.

    Stops when ||W^T (softmax(W h) - p*)||_inf <= tol; otherwise returns the
    last iterate after ``max_iter`` steps, or earlier if the line search can
    no longer make progress at rounding level.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    W = np.asarray(getattr(W, "W", W), dtype=np.float64)
    p_star = as_distribution(p_star)
    m = W.T @ p_star
    h = np.zeros(W.shape[1])
    z = W @ h
    f = _objective(z, m, h)
    trace = [f]
    it = 0
    while True:
        p_hat = np.exp(log_softmax(z))
        g = W.T @ p_hat - m
        grad_norm = float(np.abs(g).max())
        if grad_norm <= tol or it >= max_iter:
            break
        Wp = W * np.sqrt(p_hat)[:, None]
        q = W.T @ p_hat
        H = Wp.T @ Wp - np.outer(q, q)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(H, g, rcond=None)[0]
        slope = float(g @ step)
        if not slope < 0:  # singular Hessian direction: fall back to steepest descent
            step, slope = -g, -float(g @ g)
        # objective change along the step, evaluated without cancellation:
        # f(h + t s) - f(h) = log1p(p_hat . expm1(t W s)) - t m.s
        Ws, ms = W @ step, float(m @ step)
        t = 1.0
        for _ in range(MAX_HALVINGS):
            with np.errstate(over="ignore", invalid="ignore"):
                change = math.log1p(float(p_hat @ np.expm1(t * Ws))) - t * ms
            if math.isfinite(change):
                if change <= ARMIJO_C * t * slope:
                    break
            elif t < 1e-300:
                raise NumericalError("non-finite objective persists in line search")
            t *= BACKTRACK
        else:
            break  # no representable decrease left
        h = h + t * step
        z = W @ h
        f += change
        trace.append(f)
        it += 1
    ce = float(-(p_star[p_star > 0] * log_softmax(z)[p_star > 0]).sum())
    return FitReport(h, it, grad_norm, ce, tuple(trace))


def eym_residual(A, r: int) -> float:
    """Smallest squared Frobenius error of a rank-r approximation: sum_{i>r} sigma_i^2."""
    A = _entries(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("entries must be finite (log of zero is not representable)")
    if not 1 <= r <= min(A.shape):
        raise ValueError(f"rank must be in [1, {min(A.shape)}]")
    s = singular_values(A)
    return float(np.sum(s[r:] ** 2))


@dataclass(frozen=True)
class Underestimation:
    value: float
    bound: float
    where: tuple[int, int]


def max_log_underestimation(A_true, A_model) -> Underestimation:
    """max(A_true - A_model) over entries where A_true is finite, and the bound -min(A_model)."""
    At, Am = _entries(A_true), _entries(A_model)
    if At.shape != Am.shape:
        raise ValueError("shape mismatch")
    diff = np.where(np.isfinite(At), At - Am, -np.inf)
    flat = int(np.argmax(diff))
    value = float(diff.flat[flat])
    bound = float(-Am.min())
    if value > bound + 1e-12 * max(1.0, abs(bound)):
        raise ValueError("underestimation exceeds -min(A_model); A_true is not a log-probability matrix")
    return Underestimation(value, bound, np.unravel_index(flat, diff.shape))


def model_logprob_matrix(W, H) -> CondDistMatrix:
    """Column-wise log softmax of W @ H."""
    W = np.asarray(getattr(W, "W", W), dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    return CondDistMatrix(log_softmax(W @ H, axis=0))


@dataclass(frozen=True)
class RankExperiment:
    pre_rank: int
    post_rank: int
    curve: tuple  # (n_prefixes, pre_rank, post_rank) rows


def truncated_log_matrix(A: CondDistMatrix, rule: TruncationRule, sentinel: float = SENTINEL) -> np.ndarray:
    """Truncate and renormalize every column; removed entries become ``sentinel``."""
    P = A.probs()
    out = np.empty_like(P)
    for j in range(P.shape[1]):
        col = P[:, j] / P[:, j].sum()
        q = truncate(col, threshold_for(rule, col)).renormalized
        with np.errstate(divide="ignore"):
            out[:, j] = np.where(q > 0, np.log(q), sentinel)
    return out


def geometric_counts(n: int) -> list[int]:
    counts, k = [], 1
    while k < n:
        counts.append(k)
        k *= 2
    counts.append(n)
    return counts


def truncated_rank_experiment(W, H, rule: TruncationRule, tol: float = RANK_RTOL,
                              sentinel: float = SENTINEL) -> RankExperiment:
    """Numeric rank of the model log-probability matrix before and after truncation."""
    A = model_logprob_matrix(W, H)
    post = truncated_log_matrix(A, rule, sentinel)
    curve = tuple(
        (k, numeric_rank(A.entries[:, :k], tol), numeric_rank(post[:, :k], tol))
        for k in geometric_counts(A.shape[1])
    )
    return RankExperiment(curve[-1][1], curve[-1][2], curve)
