"""Token-id corpora and the ``.tok`` text format."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..lab import CondDistMatrix
from ..prob import make_rng, sample_categorical
from .model import truth_column


@dataclass(frozen=True)
class Corpus:
    docs: tuple  # tuple of tuples of token ids
    vocab_size: int

    def __post_init__(self):
        docs = tuple(tuple(int(t) for t in doc) for doc in self.docs)
        for doc in docs:
            if any(not 0 <= t < self.vocab_size for t in doc):
                raise ValueError("token id outside the vocabulary")
        object.__setattr__(self, "docs", docs)

    @property
    def n_tokens(self) -> int:
        return sum(len(doc) for doc in self.docs)

    def to_text(self) -> str:
        lines = [f"#vocab {self.vocab_size}"]
        lines += [" ".join(str(t) for t in doc) for doc in self.docs]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Corpus":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or not lines[0].startswith("#vocab "):
            raise ValueError("corpus must start with a '#vocab v' line")
        v = int(lines[0].split()[1])
        return cls(tuple(tuple(int(t) for t in line.split()) for line in lines[1:]), v)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="ascii", newline="\n")

    @classmethod
    def load(cls, path) -> "Corpus":
        return cls.from_text(Path(path).read_text(encoding="ascii"))


def sample_corpus(truth: CondDistMatrix, order: int, n_docs: int, length: int, seed: int) -> Corpus:
    """Documents drawn from the Markov ground truth; the first ``order`` tokens
    of each document are uniform."""
    v = truth.shape[0]
    rng = make_rng(seed)
    docs = []
    for _ in range(n_docs):
        doc = [int(t) for t in rng.integers(0, v, size=min(order, length))]
        while len(doc) < length:
            doc.append(sample_categorical(truth_column(truth, order, doc), rng))
        docs.append(doc)
    return Corpus(tuple(docs), v)
