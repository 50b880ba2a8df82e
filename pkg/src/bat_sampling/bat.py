"""Basis-aware threshold (BAT) sampling.

A token i is accepted only when no distribution p with p_i = 0 satisfies
both the threshold box p_j <= p_hat_j * exp(delta) and the moment
constraints U_c^T p = U_c^T p_hat, where U_c spans the leading left-singular
directions of the softmax matrix. Infeasibility of that program proves the
token has non-zero true probability.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .linalg import thin_svd
from .linprog import FeasibilityProgram, TokenFamily, UnresolvedError, solve_feasibility
from .prob import as_distribution, delta_from_tau, sample_categorical, tau_from_delta
from .truncation import ConfigError, RuleKind, TruncationRule, threshold_for

DEFAULT_MAX_VOCAB = 2048


@dataclass(frozen=True)
class SoftmaxMatrix:
    """The v x d output embedding matrix, with an optional thin-SVD cache."""

    W: np.ndarray
    svd: tuple[np.ndarray, np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or not np.all(np.isfinite(W)):
            raise ValueError("W must be a finite v x d matrix")
        object.__setattr__(self, "W", W)

    @property
    def vocab_size(self) -> int:
        return self.W.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.W.shape[1]

    def with_svd(self, method: str = "auto") -> "SoftmaxMatrix":
        if self.svd is not None:
            return self
        return SoftmaxMatrix(self.W, thin_svd(self.W, method))

    def logits(self, h) -> np.ndarray:
        return self.W @ np.asarray(h, dtype=np.float64)


@dataclass(frozen=True)
class BasisConstraints:
    """Orthonormal v x c basis U_c; ``shortfall`` is set when rank(W) < requested c."""

    U: np.ndarray
    requested: int | None = None
    shortfall: bool = False

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        if U.ndim != 2:
            raise ValueError("U must be a matrix")
        object.__setattr__(self, "U", U)

    @property
    def c(self) -> int:
        return self.U.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.U.shape[0]

    def first(self, c: int) -> "BasisConstraints":
        return BasisConstraints(self.U[:, :c], c, c > self.c)

    @classmethod
    def none(cls, v: int) -> "BasisConstraints":
        """No moment constraints: plain threshold acceptance."""
        return cls(np.zeros((v, 0)), 0)


@dataclass(frozen=True)
class BatConfig:
    c: int = 20
    max_retries: int = 32
    base_rule: TruncationRule = TruncationRule(RuleKind.ETA, 0.002)
    tol: float = 1e-8
    pricing: str = "greedy"

    def __post_init__(self):
        if self.c < 1:
            raise ConfigError("c must be at least 1")
        if self.max_retries < 1:
            raise ConfigError("max_retries must be at least 1")
        if self.base_rule.kind is RuleKind.TOPK:
            raise ConfigError("top-k has no basis-aware variant")


@dataclass
class StepDiagnostics:
    step: int = 0
    token: int = -1
    solver_calls: int = 0
    fastpath: int = 0
    retries: int = 0
    fallback: bool = False
    unresolved: int = 0

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [getattr(self, name) for name in self.columns()]


def svd_reduce(W, c: int, method: str = "auto") -> BasisConstraints:
    """First ``c`` left-singular vectors of W (all rank(W) of them if fewer)."""
    sm = W if isinstance(W, SoftmaxMatrix) else SoftmaxMatrix(W)
    if not 1 <= c <= sm.hidden_size:
        raise ValueError(f"c must be in [1, {sm.hidden_size}], got {c}")
    U, _, _ = sm.with_svd(method).svd
    return BasisConstraints(U[:, :c].copy(), c, U.shape[1] < c)


def _upper_bounds(p_hat: np.ndarray, delta: float) -> np.ndarray:
    return p_hat * math.exp(delta)


def build_program(p_hat, basis: BasisConstraints, delta: float, token: int | None) -> FeasibilityProgram:
    """Feasibility program for "token ``token`` might have zero true probability"."""
    p_hat = as_distribution(p_hat)
    if not math.isfinite(delta) or delta < 0:
        raise ValueError("delta must be finite and non-negative")
    if basis.vocab_size != p_hat.size:
        raise ValueError("basis and distribution disagree on vocabulary size")
    if token is not None and not 0 <= token < p_hat.size:
        raise ValueError("token out of range")
    A = np.vstack([np.ones(p_hat.size), basis.U.T])
    b = A @ p_hat
    b[0] = 1.0
    return FeasibilityProgram(_upper_bounds(p_hat, delta), A, b, token, p_hat)


def proves_in_support(
    p_hat,
    basis: BasisConstraints,
    delta: float,
    token: int,
    tol: float = 1e-8,
    solver=solve_feasibility,
) -> bool:
    """True iff the token's program is infeasible (so p*_token > 0).

    Tokens above the threshold 1 - exp(-delta) are accepted without solving.
    UnresolvedError from the solver propagates.
    """
    p_hat = as_distribution(p_hat)
    if p_hat[token] > tau_from_delta(delta):
        return True
    if p_hat[token] == 0.0:
        return False  # p_hat itself is a witness
    return not solver(build_program(p_hat, basis, delta, token), tol=tol).feasible


def bat_threads() -> int:
    env = os.environ.get("BAT_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ConfigError("BAT_THREADS must be a positive integer")
        return n
    return os.cpu_count() or 1


def candidate_set(
    p_hat,
    basis: BasisConstraints,
    delta: float,
    tol: float = 1e-8,
    max_vocab: int | None = DEFAULT_MAX_VOCAB,
    threads: int | None = None,
    pricing: str = "greedy",
) -> frozenset:
    """All tokens proven to be in the support.

    Refuses vocabularies above ``max_vocab`` (pass None to override).
    """
    p_hat = as_distribution(p_hat)
    v = p_hat.size
    if max_vocab is not None and v > max_vocab:
        raise ConfigError(f"candidate_set over {v} tokens refused (limit {max_vocab})")
    tau = tau_from_delta(delta)
    if tau >= 1.0:
        return frozenset([int(np.argmax(p_hat))])
    accepted = np.flatnonzero(p_hat > tau)
    todo = np.flatnonzero((p_hat <= tau) & (p_hat > 0))
    if todo.size == 0:
        return frozenset(accepted.tolist())
    family = TokenFamily(build_program(p_hat, basis, delta, None), tol=tol, pricing=pricing)
    workers = min(threads or bat_threads(), todo.size)
    if workers <= 1:
        feasible = family.decide(todo)
    else:
        with ThreadPoolExecutor(workers) as pool:
            feasible = np.concatenate(list(pool.map(family.decide, np.array_split(todo, workers))))
    proven = todo[~feasible].tolist()
    return frozenset(accepted.tolist() + proven)


def bat_sample(
    p_hat,
    basis: BasisConstraints,
    delta: float,
    rng: np.random.Generator,
    config: BatConfig | None = None,
) -> tuple[int, StepDiagnostics]:
    """Draw from p_hat until a token is proven to be in the support.

    Rejected tokens are masked out of later draws (the same distribution as
    redrawing, without re-solving); after ``max_retries`` rejections, or when
    nothing is left, the argmax is returned with ``fallback`` set.
    """
    config = config or BatConfig()
    p_hat = as_distribution(p_hat)
    diag = StepDiagnostics()
    tau = tau_from_delta(delta)
    if tau >= 1.0:
        diag.token = int(np.argmax(p_hat))
        return diag.token, diag
    family = None
    live = p_hat.copy()
    while diag.retries < config.max_retries:
        mass = live.sum()
        if mass <= 0:
            break
        i = sample_categorical(live / mass, rng)
        if p_hat[i] > tau:
            diag.fastpath += 1
            diag.token = i
            return i, diag
        if family is None:
            prog = build_program(p_hat, basis, delta, None)
            family = TokenFamily(prog, tol=config.tol, pricing=config.pricing)
        diag.solver_calls += 1
        try:
            accepted = not family.solve(i).feasible
        except UnresolvedError:
            diag.unresolved += 1
            accepted = False
        if accepted:
            diag.token = i
            return i, diag
        diag.retries += 1
        live[i] = 0.0
    diag.token = int(np.argmax(p_hat))
    diag.fallback = True
    return diag.token, diag


def ba_rule_sample(
    p_hat,
    basis: BasisConstraints,
    rule: TruncationRule,
    rng: np.random.Generator,
    config: BatConfig | None = None,
) -> tuple[int, StepDiagnostics]:
    """BA-epsilon / BA-eta / BA-tau / BA-nucleus: the rule's threshold sets delta."""
    if rule.kind is RuleKind.TOPK:
        raise ConfigError("top-k has no basis-aware variant")
    p_hat = as_distribution(p_hat)
    tau = threshold_for(rule, p_hat)
    if tau >= 1.0:
        diag = StepDiagnostics(token=int(np.argmax(p_hat)))
        return diag.token, diag
    return bat_sample(p_hat, basis, delta_from_tau(tau), rng, config)
