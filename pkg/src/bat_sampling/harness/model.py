"""Tabular-context toy language models and the ``.bam`` model file format."""

from __future__ import annotations

import functools
import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..bat import BasisConstraints, svd_reduce
from ..lab import CondDistMatrix, fit_hidden_state, synth_true_matrix
from ..prob import make_rng, softmax

MAGIC = b"BAM1"
MAX_CONTEXTS = 65536
TOY_W = np.array([[0.55], [0.71], [0.29]])
TOY_P_STAR = np.array([0.0, 0.70, 0.30])


class FormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ToyModel:
    """Order-m model: the last m tokens select a hidden state h; p_hat = softmax(W h).

    Histories shorter than m tokens (and unseen contexts) use ``fallback_h``.
    """

    W: np.ndarray
    order: int
    contexts: dict = field(repr=False)
    fallback_h: np.ndarray = field(repr=False)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or not np.all(np.isfinite(W)):
            raise ValueError("W must be a finite matrix")
        v, d = W.shape
        for ctx, h in self.contexts.items():
            if len(ctx) != self.order or any(not 0 <= t < v for t in ctx):
                raise ValueError(f"bad context {ctx!r}")
            if np.shape(h) != (d,) or not np.all(np.isfinite(h)):
                raise ValueError(f"bad hidden state for context {ctx!r}")
        object.__setattr__(self, "W", W)

    @property
    def vocab_size(self) -> int:
        return self.W.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.W.shape[1]

    def context_key(self, history) -> tuple | None:
        if len(history) < self.order:
            return None
        return tuple(int(t) for t in history[len(history) - self.order:])

    def hidden(self, history) -> np.ndarray:
        key = self.context_key(history)
        return self.contexts.get(key, self.fallback_h) if key is not None else self.fallback_h

    def distribution(self, history) -> np.ndarray:
        return softmax(self.W @ self.hidden(history))

    @functools.cached_property
    def _svd_basis(self) -> BasisConstraints:
        return svd_reduce(self.W, self.hidden_size)

    def basis(self, c: int) -> BasisConstraints:
        """Leading min(c, d) left-singular vectors of W."""
        return self._svd_basis.first(min(c, self._svd_basis.c))

    def __eq__(self, other):
        if not isinstance(other, ToyModel):
            return NotImplemented
        return to_bytes(self) == to_bytes(other)


def all_contexts(v: int, m: int) -> list[tuple]:
    return list(itertools.product(range(v), repeat=m))


def fit_model(W, truth: CondDistMatrix, order: int, tol: float = 1e-8) -> ToyModel:
    """Fit one hidden state per context (column j of ``truth`` is context j in
    lexicographic order); the fallback is fitted to the average column."""
    W = np.asarray(W, dtype=np.float64)
    contexts = all_contexts(W.shape[0], order)
    if truth.shape != (W.shape[0], len(contexts)):
        raise ValueError("ground truth must have one column per context")
    P = truth.probs()
    table = {ctx: fit_hidden_state(W, P[:, j], tol=tol).h for j, ctx in enumerate(contexts)}
    fallback = fit_hidden_state(W, P.mean(axis=1), tol=tol).h
    return ToyModel(W, order, table, fallback)


def build_toy_model(v: int, d: int, m: int, seed: int, support_frac: float = 0.5,
                    tol: float = 1e-8) -> tuple[ToyModel, CondDistMatrix]:
    """Random W and an order-m Markov ground truth, with every context fitted."""
    if v < 2 or d < 1 or m < 0:
        raise ValueError("need v >= 2, d >= 1, m >= 0")
    if v ** m > MAX_CONTEXTS:
        raise ValueError(f"v^m = {v ** m} contexts exceeds the limit of {MAX_CONTEXTS}")
    truth = synth_true_matrix(v, v ** m, support_frac, seed)
    W = make_rng(seed, stream=1).standard_normal((v, d))
    return fit_model(W, truth, m, tol), truth


def toy_example_model() -> tuple[ToyModel, CondDistMatrix]:
    """Three tokens, one hidden dimension, true distribution [0, 0.7, 0.3]."""
    with np.errstate(divide="ignore"):
        truth = CondDistMatrix(np.log(TOY_P_STAR)[:, None])
    return fit_model(TOY_W, truth, 0, tol=1e-12), truth


def truth_column(truth: CondDistMatrix, order: int, history) -> np.ndarray:
    """p*(. | last ``order`` tokens of history)."""
    v = truth.shape[0]
    j = 0
    for t in history[len(history) - order:] if order else ():
        j = j * v + int(t)
    return truth.column(j)


# -- .bam files: little-endian; magic, u32 v d m, f64 W (row-major),
#    u32 count, per context (m u32 ids, d f64 h), d f64 fallback.

def to_bytes(model: ToyModel) -> bytes:
    v, d = model.W.shape
    m = model.order
    parts = [MAGIC, struct.pack("<3I", v, d, m), model.W.astype("<f8").tobytes()]
    parts.append(struct.pack("<I", len(model.contexts)))
    for ctx in sorted(model.contexts):
        parts.append(struct.pack(f"<{m}I", *ctx))
        parts.append(np.asarray(model.contexts[ctx], dtype="<f8").tobytes())
    parts.append(np.asarray(model.fallback_h, dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes) -> ToyModel:
    if data[:4] != MAGIC:
        raise FormatError("not a BAM1 model file")
    try:
        v, d, m = struct.unpack_from("<3I", data, 4)
        off = 16
        W = np.frombuffer(data, "<f8", v * d, off).reshape(v, d).astype(np.float64)
        off += 8 * v * d
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        table = {}
        for _ in range(count):
            ctx = struct.unpack_from(f"<{m}I", data, off)
            off += 4 * m
            table[tuple(ctx)] = np.frombuffer(data, "<f8", d, off).astype(np.float64)
            off += 8 * d
        fallback = np.frombuffer(data, "<f8", d, off).astype(np.float64)
        off += 8 * d
    except (struct.error, ValueError) as exc:
        raise FormatError(f"truncated model file: {exc}") from None
    if off != len(data):
        raise FormatError("trailing bytes after model")
    return ToyModel(W, m, table, fallback)


def save_model(model: ToyModel, path) -> None:
    Path(path).write_bytes(to_bytes(model))


def load_model(path) -> ToyModel:
    return from_bytes(Path(path).read_bytes())
