"""Threshold-based truncation: epsilon, eta, nucleus, top-k and fixed tau."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .prob import as_distribution, entropy, sample_categorical


class ConfigError(ValueError):
    """Malformed rule string or out-of-range rule parameter."""


class RuleKind(enum.Enum):
    EPSILON = "epsilon"
    ETA = "eta"
    NUCLEUS = "nucleus"
    TOPK = "topk"
    FIXED_TAU = "tau"


@dataclass(frozen=True)
class TruncationRule:
    kind: RuleKind
    parameter: float

    def __post_init__(self):
        k, x = self.kind, self.parameter
        if k in (RuleKind.EPSILON, RuleKind.ETA, RuleKind.FIXED_TAU):
            ok = 0.0 <= x < 1.0
        elif k is RuleKind.NUCLEUS:
            ok = 0.0 < x <= 1.0
        else:
            ok = float(x).is_integer() and x >= 1
        if not ok:
            raise ConfigError(f"parameter {x!r} out of range for {k.value}")

    def __str__(self):
        if self.kind is RuleKind.TOPK:
            return f"topk:{int(self.parameter)}"
        return f"{self.kind.value}:{self.parameter:g}"

    @classmethod
    def parse(cls, text: str) -> "TruncationRule":
        """Parse ``kind:value`` (e.g. ``eta:0.002``, ``topk:50``)."""
        name, sep, value = text.strip().partition(":")
        if not sep:
            raise ConfigError(f"rule {text!r} is not of the form kind:value")
        try:
            kind = RuleKind(name.lower())
        except ValueError:
            raise ConfigError(f"unknown rule kind {name!r}") from None
        try:
            parameter = float(value)
        except ValueError:
            raise ConfigError(f"bad rule parameter {value!r}") from None
        return cls(kind, parameter)


@dataclass(frozen=True)
class CandidateSet:
    accepted: frozenset
    threshold_used: float
    renormalized: np.ndarray = field(repr=False, compare=False)


def nucleus_threshold(p: np.ndarray, top_p: float) -> float:
    """min{p_i : sum_{p_j >= p_i} p_j <= top_p}.

    When no token qualifies (the top token alone exceeds ``top_p``) the
    returned threshold lies strictly above every probability, so truncation
    falls back to the argmax.
    """
    values = np.sort(p)[::-1]
    # mass of all tokens >= each value, ties counted together
    cum = np.cumsum(values)
    last_of_run = np.r_[values[1:] != values[:-1], True]
    group = np.r_[0, np.cumsum(last_of_run[:-1])]
    group_mass = cum[last_of_run][group]
    ok = group_mass <= top_p + 1e-12
    if not ok.any():
        return (1.0 + values[0]) / 2.0
    return float(values[ok].min())


def threshold_for(rule: TruncationRule, p) -> float:
    p = as_distribution(p)
    k, x = rule.kind, rule.parameter
    if k is RuleKind.EPSILON or k is RuleKind.FIXED_TAU:
        return float(x)
    if k is RuleKind.ETA:
        return float(min(x, math.sqrt(x) * entropy(p)))
    if k is RuleKind.NUCLEUS:
        return nucleus_threshold(p, x)
    kk = min(int(x), p.size)
    return float(np.partition(p, p.size - kk)[p.size - kk])


def truncate(p, tau: float) -> CandidateSet:
    """Keep tokens with p_i >= tau (argmax if none survive) and renormalize."""
    p = as_distribution(p)
    keep = p >= tau
    keep &= p > 0
    if not keep.any():
        keep = np.zeros(p.size, dtype=bool)
        keep[int(np.argmax(p))] = True
    q = np.where(keep, p, 0.0)
    q /= q.sum()
    return CandidateSet(frozenset(np.flatnonzero(keep).tolist()), float(tau), q)


def truncation_sample(p, rule: TruncationRule, rng: np.random.Generator) -> int:
    cand = truncate(p, threshold_for(rule, p))
    return sample_categorical(cand.renormalized, rng)
