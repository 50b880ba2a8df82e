"""Samplers (plain truncation or basis-aware) and the generation loop."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..bat import (
    BasisConstraints,
    BatConfig,
    StepDiagnostics,
    ba_rule_sample,
    candidate_set,
    proves_in_support,
)
from ..prob import delta_from_tau, make_rng, sample_categorical
from ..truncation import ConfigError, RuleKind, TruncationRule, threshold_for, truncate
from .model import ToyModel

BA_PREFIX = "ba-"


@dataclass(frozen=True)
class Sampler:
    """A truncation rule, optionally in its basis-aware variant (``ba-`` prefix)."""

    rule: TruncationRule
    basis_aware: bool = False

    def __post_init__(self):
        if self.basis_aware and self.rule.kind is RuleKind.TOPK:
            raise ConfigError("top-k has no basis-aware variant")

    def __str__(self):
        return (BA_PREFIX if self.basis_aware else "") + str(self.rule)

    @property
    def method(self) -> str:
        return (BA_PREFIX if self.basis_aware else "") + self.rule.kind.value

    @property
    def parameter(self) -> float:
        return self.rule.parameter

    @classmethod
    def parse(cls, text: str) -> "Sampler":
        text = text.strip()
        ba = text.lower().startswith(BA_PREFIX)
        return cls(TruncationRule.parse(text[len(BA_PREFIX):] if ba else text), ba)

    def with_parameter(self, x: float) -> "Sampler":
        return replace(self, rule=TruncationRule(self.rule.kind, x))

    def accepts(self, p_hat: np.ndarray, token: int, basis: BasisConstraints | None,
                tol: float = 1e-8) -> bool:
        """Whether ``token`` is in this sampler's accepted set for ``p_hat``."""
        tau = threshold_for(self.rule, p_hat)
        if not self.basis_aware:
            return token in truncate(p_hat, tau).accepted
        if tau >= 1.0:
            return token == int(np.argmax(p_hat))
        return proves_in_support(p_hat, basis, delta_from_tau(tau), token, tol)

    def accepted_set(self, p_hat: np.ndarray, basis: BasisConstraints | None,
                     tol: float = 1e-8) -> frozenset:
        tau = threshold_for(self.rule, p_hat)
        if not self.basis_aware:
            return truncate(p_hat, tau).accepted
        if tau >= 1.0:
            return frozenset([int(np.argmax(p_hat))])
        return candidate_set(p_hat, basis, delta_from_tau(tau), tol)

    def sample(self, p_hat: np.ndarray, rng: np.random.Generator,
               basis: BasisConstraints | None, config: BatConfig) -> tuple[int, StepDiagnostics]:
        if self.basis_aware:
            return ba_rule_sample(p_hat, basis, self.rule, rng, config)
        cand = truncate(p_hat, threshold_for(self.rule, p_hat))
        token = sample_categorical(cand.renormalized, rng)
        return token, StepDiagnostics(token=token)


@dataclass
class Generation:
    tokens: list
    diagnostics: list
    audit: list | None = field(default=None, repr=False)


def generate(model: ToyModel, prefix, sampler: Sampler, length: int, seed: int,
             config: BatConfig | None = None, audit: bool = False) -> Generation:
    """Sample ``length`` tokens after ``prefix``.

    With ``audit`` the accepted set of every step is recorded and each sampled
    token is checked against it (slow: full candidate sets for BA samplers).
    """
    config = config or BatConfig()
    history = [int(t) for t in prefix]
    if any(not 0 <= t < model.vocab_size for t in history):
        raise ValueError("prefix token outside the vocabulary")
    rng = make_rng(seed)
    basis = model.basis(config.c) if sampler.basis_aware else None
    out, diags, sets = [], [], [] if audit else None
    for step in range(length):
        p_hat = model.distribution(history)
        token, diag = sampler.sample(p_hat, rng, basis, config)
        diag.step = step
        if audit:
            allowed = sampler.accepted_set(p_hat, basis, config.tol)
            if token not in allowed and not diag.fallback:
                raise AssertionError(f"step {step}: token {token} outside the accepted set")
            sets.append(allowed)
        out.append(token)
        diags.append(diag)
        history.append(token)
    return Generation(out, diags, sets)
