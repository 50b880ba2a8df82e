import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bat_sampling.prob import make_rng, tau_from_delta
from bat_sampling.truncation import (
    ConfigError,
    RuleKind,
    TruncationRule,
    nucleus_threshold,
    threshold_for,
    truncate,
    truncation_sample,
)

weights = arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 1)).filter(lambda w: w.sum() > 0)
TOY_P = np.array([0.3312234109293999, 0.4980961373028221, 0.17068045176777807])


def normalize(w):
    return w / w.sum()


def brute_nucleus(p, top_p):
    """min p_i over tokens whose >=-mass is <= top_p, by direct enumeration."""
    ok = [p[i] for i in range(p.size) if p[p >= p[i]].sum() <= top_p + 1e-12]
    return min(ok) if ok else None


# -- rule parsing -------------------------------------------------------------------

@pytest.mark.parametrize("text,kind,value", [
    ("epsilon:0.0009", RuleKind.EPSILON, 0.0009),
    ("eta:0.002", RuleKind.ETA, 0.002),
    ("nucleus:0.95", RuleKind.NUCLEUS, 0.95),
    ("topk:50", RuleKind.TOPK, 50),
    ("tau:0.3", RuleKind.FIXED_TAU, 0.3),
])
def test_parse_rules(text, kind, value):
    rule = TruncationRule.parse(text)
    assert rule.kind is kind and rule.parameter == value
    assert TruncationRule.parse(str(rule)) == rule


@pytest.mark.parametrize("text", ["epsilon", "foo:1", "eta:x", "epsilon:1.0", "nucleus:0", "topk:0",
                                  "topk:2.5", "tau:-0.1"])
def test_parse_rejects_bad_rules(text):
    with pytest.raises(ConfigError):
        TruncationRule.parse(text)


# -- thresholds ------------------------------------------------------------------------

def test_eta_threshold_uniform_four():
    tau = threshold_for(TruncationRule(RuleKind.ETA, 0.04), [0.25] * 4)
    assert tau == pytest.approx(min(0.04, 0.2 * math.log(4)), abs=1e-15)
    assert tau == pytest.approx(0.04, abs=1e-15)


def test_eta_threshold_low_entropy_branch():
    p = [0.999, 0.001]
    h = -(0.999 * math.log(0.999) + 0.001 * math.log(0.001))
    assert threshold_for(TruncationRule(RuleKind.ETA, 0.04), p) == pytest.approx(0.2 * h, abs=1e-15)


def test_nucleus_threshold_hand_example():
    assert threshold_for(TruncationRule(RuleKind.NUCLEUS, 0.9), [0.5, 0.3, 0.15, 0.05]) == 0.3


def test_nucleus_degenerate_falls_back_to_argmax():
    p = [0.7, 0.2, 0.1]
    tau = threshold_for(TruncationRule(RuleKind.NUCLEUS, 0.5), p)
    assert tau > 0.7
    assert truncate(p, tau).accepted == {0}


def test_nucleus_ties_are_all_accepted():
    p = [0.4, 0.3, 0.3]
    tau = threshold_for(TruncationRule(RuleKind.NUCLEUS, 0.5), p)
    assert tau == 0.4
    tau = threshold_for(TruncationRule(RuleKind.NUCLEUS, 0.75), p)
    # mass of tokens >= 0.3 is 1.0 > 0.75, so the tied pair is excluded together
    assert tau == 0.4
    assert threshold_for(TruncationRule(RuleKind.NUCLEUS, 1.0), p) == 0.3


@given(weights, st.floats(0.01, 1.0))
def test_nucleus_matches_enumeration(w, top_p):
    p = normalize(w)
    expected = brute_nucleus(p, top_p)
    got = nucleus_threshold(p, top_p)
    if expected is None:
        assert got >= p.max()
        assert truncate(p, got).accepted == {int(np.argmax(p))}
    else:
        assert got == expected


def test_topk_threshold():
    p = [0.1, 0.4, 0.2, 0.3]
    assert threshold_for(TruncationRule(RuleKind.TOPK, 1), p) == 0.4
    assert truncate(p, threshold_for(TruncationRule(RuleKind.TOPK, 2), p)).accepted == {1, 3}
    assert threshold_for(TruncationRule(RuleKind.TOPK, 10), p) == 0.1


@given(weights, st.integers(1, 30))
def test_topk_accepts_k_unless_ties(w, k):
    p = normalize(w)
    cand = truncate(p, threshold_for(TruncationRule(RuleKind.TOPK, k), p))
    s = np.sort(p)[::-1]
    kk = min(k, p.size)
    if s[kk - 1] > 0 and (kk == p.size or s[kk - 1] != s[kk]):
        assert len(cand.accepted) == kk
    else:
        assert len(cand.accepted) >= 1


# -- truncate -----------------------------------------------------------------------

def test_truncate_rejection_example():
    cand = truncate([0.02, 0.3, 0.01, 0.001, 0.3 + 0.369], 0.002)
    assert cand.accepted == {0, 1, 2, 4}


def test_truncate_tau_zero_and_fallback():
    p = [0.5, 0.0, 0.5]
    assert truncate(p, 0.0).accepted == {0, 2}
    assert truncate([0.2, 0.5, 0.3], 0.9).accepted == {1}


def test_truncate_equal_to_tau_is_accepted():
    assert truncate([0.25, 0.75], 0.25).accepted == {0, 1}


@given(weights, st.floats(0, 1), st.floats(0, 1))
def test_truncate_monotone_in_tau(w, t1, t2):
    p = normalize(w)
    lo, hi = sorted((t1, t2))
    assert truncate(p, hi).accepted <= truncate(p, lo).accepted


@given(weights, st.floats(0, 1))
def test_candidate_set_invariants(w, tau):
    p = normalize(w)
    cand = truncate(p, tau)
    assert cand.accepted
    q = cand.renormalized
    assert abs(q.sum() - 1) <= 1e-9
    outside = np.ones(p.size, dtype=bool)
    outside[list(cand.accepted)] = False
    assert np.all(q[outside] == 0)
    inside = sorted(cand.accepted)
    np.testing.assert_allclose(q[inside], p[inside] / p[inside].sum(), rtol=1e-12)


@settings(max_examples=200)
@given(st.integers(2, 30), st.floats(0.01, 4), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_threshold_at_least_bound_discards_out_of_support(v, delta, extra, seed):
    rng = make_rng(seed)
    p_star = rng.dirichlet(np.ones(v))
    p_star[rng.random(v) < 0.4] = 0.0
    if p_star.sum() == 0:
        p_star[-1] = 1.0
    p_star /= p_star.sum()
    p_hat = p_star * np.exp(-delta * rng.random(v))
    p_hat += (1 - p_hat.sum()) * rng.dirichlet(np.ones(v))
    tau = tau_from_delta(delta) + extra * (1 - tau_from_delta(delta))
    cand = truncate(p_hat, tau)
    if len(cand.accepted) == 1 and p_hat.max() < tau:
        return  # argmax fallback, not a threshold decision
    assert all(p_star[i] > 0 for i in cand.accepted)


# -- sampling ------------------------------------------------------------------------

def test_truncation_sample_one_hot():
    rng = make_rng(0)
    for text in ("epsilon:0.5", "eta:0.1", "nucleus:0.2", "topk:3", "tau:0.9"):
        assert truncation_sample([0, 0, 1.0], TruncationRule.parse(text), rng) == 2


def test_fixed_tau_toy_always_token_one():
    rng = make_rng(3)
    rule = TruncationRule(RuleKind.FIXED_TAU, 0.4737)
    assert {truncation_sample(TOY_P, rule, rng) for _ in range(2000)} == {1}


def test_truncation_sample_frequencies():
    p = np.array([0.001, 0.4, 0.35, 0.249])
    rule = TruncationRule(RuleKind.EPSILON, 0.3)
    rng = make_rng(8)
    draws = np.array([truncation_sample(p, rule, rng) for _ in range(200_000)])
    expected = {1: 0.4 / 0.75, 2: 0.35 / 0.75}
    for tok, freq in expected.items():
        assert abs(np.mean(draws == tok) - freq) <= 0.005
    assert set(np.unique(draws)) == {1, 2}
