"""Human-text rejection rate (HRR) and HRR-based parameter matching."""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..bat import bat_threads, build_program
from ..linprog import TokenFamily
from ..prob import delta_from_tau, make_rng, softmax, tau_from_delta
from ..truncation import RuleKind, threshold_for, truncate
from .corpus import Corpus
from .model import ToyModel
from .sampling import Sampler

MAX_BISECTIONS = 40


class NonMonotoneError(ValueError):
    """HRR was not monotone in the parameter over the search bracket."""


@dataclass(frozen=True)
class HrrReport:
    method: str
    parameter: float
    rejected: int
    total: int

    @property
    def hrr(self) -> float:
        return self.rejected / self.total

    def row(self) -> list:
        return [self.method, self.parameter, self.rejected, self.total, self.hrr]


class HrrTask:
    """The (context, gold next token) pairs of a corpus, deduplicated.

    Pairs are all positions with a full model context; ``positions`` draws
    that many of them uniformly without replacement instead.
    """

    def __init__(self, corpus: Corpus, model: ToyModel, positions: int | None = None,
                 seed: int = 0, c: int = 20, tol: float = 1e-8):
        if corpus.vocab_size != model.vocab_size:
            raise ValueError("corpus and model vocabularies differ")
        pairs = [
            (model.context_key(doc[:t]), doc[t])
            for doc in corpus.docs
            for t in range(model.order, len(doc))
        ]
        if not pairs:
            raise ValueError("corpus has no scorable positions")
        if positions is not None and positions < len(pairs):
            pick = np.sort(make_rng(seed).choice(len(pairs), size=positions, replace=False))
            pairs = [pairs[i] for i in pick]
        counts = Counter(pairs)
        self.pairs = sorted(counts)
        self.counts = np.array([counts[p] for p in self.pairs])
        self.total = int(self.counts.sum())
        self.model = model
        self.basis = model.basis(c)
        self.tol = tol
        self._dists = {}
        by_key = {}
        for k, (key, _) in enumerate(self.pairs):
            by_key.setdefault(key, []).append(k)
        self._by_key = {key: np.array(idx) for key, idx in by_key.items()}

    def distribution(self, key) -> np.ndarray:
        if key not in self._dists:
            h = self.model.fallback_h if key is None else self.model.contexts.get(key, self.model.fallback_h)
            self._dists[key] = softmax(self.model.W @ h)
        return self._dists[key]

    def rejected(self, sampler: Sampler, known: np.ndarray | None = None,
                 threads: int | None = None) -> np.ndarray:
        """Rejection flag per distinct pair; entries of ``known`` that are 0/1
        are taken as given (-1 means evaluate)."""
        flags = np.zeros(len(self.pairs), dtype=bool) if known is None else known == 1
        work = []
        for key, idx in self._by_key.items():
            if known is not None:
                idx = idx[known[idx] == -1]
            if idx.size:
                work.append((key, idx))
        workers = min(threads or bat_threads(), len(work)) if sampler.basis_aware else 1
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(lambda kw: self._accepts(sampler, *kw), work))
        else:
            results = [self._accepts(sampler, key, idx) for key, idx in work]
        for (_, idx), ok in zip(work, results):
            flags[idx] = ~ok
        return flags

    def _accepts(self, sampler: Sampler, key, idx: np.ndarray) -> np.ndarray:
        p = self.distribution(key)
        gold = np.array([self.pairs[k][1] for k in idx])
        tau = threshold_for(sampler.rule, p)
        if not sampler.basis_aware:
            return np.isin(gold, list(truncate(p, tau).accepted))
        if tau >= 1.0:
            return gold == int(np.argmax(p))
        delta = delta_from_tau(tau)
        ok = p[gold] > tau_from_delta(delta)
        need = ~ok & (p[gold] > 0)
        if need.any():
            family = TokenFamily(build_program(p, self.basis, delta, None), tol=self.tol)
            ok[need] = ~family.decide(gold[need])
        return ok

    def report(self, sampler: Sampler, known: np.ndarray | None = None) -> tuple[HrrReport, np.ndarray]:
        flags = self.rejected(sampler, known)
        rejected = int(self.counts[flags].sum())
        return HrrReport(sampler.method, sampler.parameter, rejected, self.total), flags


def hrr(corpus: Corpus, model: ToyModel, sampler: Sampler, positions: int | None = None,
        seed: int = 0, c: int = 20, tol: float = 1e-8) -> HrrReport:
    """Fraction of gold next tokens outside the sampler's accepted set."""
    return HrrTask(corpus, model, positions, seed, c, tol).report(sampler)[0]


@dataclass(frozen=True)
class MatchResult:
    parameter: float
    target: HrrReport
    reference: HrrReport
    iterations: int
    converged: bool
    bracket: tuple = ()  # final (fewer-rejections end, more-rejections end)
    bracket_reports: tuple = field(default=(), repr=False)

    @property
    def gap(self) -> float:
        return abs(self.target.hrr - self.reference.hrr)


def default_bracket(kind: RuleKind, vocab_size: int) -> tuple[float, float]:
    if kind is RuleKind.NUCLEUS:
        return 1e-9, 1.0
    if kind is RuleKind.TOPK:
        return 1.0, float(vocab_size)
    return 0.0, 0.999


def match_param(task: HrrTask, reference: Sampler, target: Sampler,
                lo: float | None = None, hi: float | None = None,
                max_iter: int = MAX_BISECTIONS) -> MatchResult:
    """Bisect ``target``'s parameter until its HRR equals the reference HRR
    within half a count (or ``max_iter`` steps).

    Raises NonMonotoneError when a midpoint's HRR falls outside the HRRs of
    the current bracket ends. Basis-aware targets reuse decisions that
    monotonicity fixes: a pair rejected at the less-rejecting end stays
    rejected inside the bracket, and one accepted at the more-rejecting end
    stays accepted.
    """
    ref, _ = task.report(reference)
    dlo, dhi = default_bracket(target.rule.kind, task.model.vocab_size)
    lo = dlo if lo is None else lo
    hi = dhi if hi is None else hi
    integer = target.rule.kind is RuleKind.TOPK
    half_count = 1.0 / (2 * task.total)

    def evaluate(x, flags_a=None, flags_b=None):
        known = None
        if target.basis_aware and flags_a is not None:
            known = np.full(len(task.pairs), -1)
            known[flags_a] = 1
            known[~flags_b] = 0
        return task.report(target.with_parameter(x), known)

    rep_lo, f_lo = evaluate(lo)
    rep_hi, f_hi = evaluate(hi)
    # orient so that "a" rejects no more than "b"
    flip = rep_lo.rejected > rep_hi.rejected
    a, b = (hi, lo) if flip else (lo, hi)
    rep_a, rep_b = (rep_hi, rep_lo) if flip else (rep_lo, rep_hi)
    f_a, f_b = (f_hi, f_lo) if flip else (f_lo, f_hi)
    if not rep_a.rejected <= ref.rejected <= rep_b.rejected:
        raise ValueError(
            f"reference HRR {ref.hrr:.6g} outside [{rep_a.hrr:.6g}, {rep_b.hrr:.6g}] over [{lo}, {hi}]"
        )
    best = min((rep_a, a), (rep_b, b), key=lambda r: abs(r[0].hrr - ref.hrr))
    it = 0
    while abs(best[0].hrr - ref.hrr) > half_count and it < max_iter:
        mid = (a + b) / 2.0
        if integer:
            mid = float(math.floor(mid)) if math.floor(mid) not in (a, b) else float(math.ceil(mid))
            if mid in (a, b):
                break
        it += 1
        rep, flags = evaluate(mid, f_a, f_b)
        if not rep_a.rejected <= rep.rejected <= rep_b.rejected:
            raise NonMonotoneError(
                f"HRR not monotone on [{min(a, b)}, {max(a, b)}]: "
                f"{rep_a.hrr:.6g}, {rep.hrr:.6g} at {mid}, {rep_b.hrr:.6g}"
            )
        if abs(rep.hrr - ref.hrr) < abs(best[0].hrr - ref.hrr):
            best = (rep, mid)
        if rep.rejected < ref.rejected:
            a, rep_a, f_a = mid, rep, flags
        else:
            b, rep_b, f_b = mid, rep, flags
    rep, x = best
    return MatchResult(x, rep, ref, it, abs(rep.hrr - ref.hrr) <= half_count, (a, b), (rep_a, rep_b))
