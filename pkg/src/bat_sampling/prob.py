"""Probability primitives: stable softmax, entropies, categorical draws and the
delta <-> tau correspondence.

Distributions are plain 1-D float64 arrays. ``as_distribution`` is the single
place where the normalization tolerance is enforced.
"""

from __future__ import annotations

import math

import numpy as np

NORM_TOL = 1e-9
RNG_ALGORITHM = "numpy.PCG64"


class InvalidInputError(ValueError):
    """Raised when a vector does not satisfy the contract of an operation."""


def make_rng(seed: int | None, stream: int = 0) -> np.random.Generator:
    """Seeded generator; the algorithm is recorded as ``RNG_ALGORITHM``.

    Distinct ``stream`` values give independent generators for one seed.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(stream,) if stream else ())
    return np.random.Generator(np.random.PCG64(ss))


def as_distribution(p, tol: float = NORM_TOL) -> np.ndarray:
    """Validate ``p`` and return a renormalized float64 copy.

    Entries must be finite and non-negative and sum to one within ``tol``.
    """
    p = np.array(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError("distribution must be a non-empty 1-D vector")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("distribution has non-finite entries")
    if np.any(p < 0):
        raise InvalidInputError("distribution has negative entries")
    total = p.sum()
    if abs(total - 1.0) > tol:
        raise InvalidInputError(f"distribution sums to {total!r}, not 1")
    return p / total


def _as_logits(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise InvalidInputError("empty logits")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("logits must be finite")
    return x


def log_softmax(x, axis: int = -1) -> np.ndarray:
    x = _as_logits(x)
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(x, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax. Underflowed entries come out as exact zeros."""
    x = _as_logits(x)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    p = e / e.sum(axis=axis, keepdims=True)
    p[p < np.finfo(np.float64).tiny] = 0.0
    return p


def entropy(p) -> float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    p = as_distribution(p)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def cross_entropy(p, q) -> float:
    """CE(p, q) = -sum p_i log q_i in nats.

    Returns ``inf`` when q puts zero mass where p is positive.
    """
    p = as_distribution(p)
    q = as_distribution(q)
    if p.shape != q.shape:
        raise InvalidInputError("shape mismatch")
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return float(-(p[mask] * np.log(q[mask])).sum())


def sample_categorical(p, rng: np.random.Generator, size=None):
    """Inverse-CDF draw(s) of token indices from ``p``."""
    p = np.asarray(p, dtype=np.float64)
    cdf = np.cumsum(p)
    u = rng.random(size) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    # guards u landing exactly on the last edge and zero-mass trailing tokens
    idx = np.minimum(idx, np.flatnonzero(p > 0)[-1])
    if size is None:
        return int(idx)
    return idx


def tau_from_delta(delta: float) -> float:
    if delta < 0 or math.isnan(delta):
        raise InvalidInputError("delta must be >= 0")
    if math.isinf(delta):
        return 1.0
    return -math.expm1(-delta)


def delta_from_tau(tau: float) -> float:
    """Inverse of ``tau_from_delta`` on [0, 1). tau >= 1 means greedy and is
    rejected here so that callers handle it explicitly."""
    if not 0.0 <= tau < 1.0:
        raise InvalidInputError(f"tau={tau!r} outside [0, 1)")
    return -math.log1p(-tau)
