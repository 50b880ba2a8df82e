"""Toy-model harness: models, corpora, samplers, HRR and the command line."""

from .corpus import Corpus, sample_corpus
from .hrr import HrrReport, HrrTask, MatchResult, NonMonotoneError, hrr, match_param
from .model import (
    FormatError,
    ToyModel,
    build_toy_model,
    fit_model,
    load_model,
    save_model,
    toy_example_model,
)
from .sampling import Generation, Sampler, generate

__all__ = [
    "Corpus", "FormatError", "Generation", "HrrReport", "HrrTask", "MatchResult",
    "NonMonotoneError", "Sampler", "ToyModel", "build_toy_model", "fit_model", "generate",
    "hrr", "load_model", "match_param", "sample_corpus", "save_model", "toy_example_model",
]
