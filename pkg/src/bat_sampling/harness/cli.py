"""Command line: ``bat-lab <subcommand> [options]``.

Every subcommand writes CSV preceded by ``#`` metadata lines (seed, version,
rule, rng, command). Exit status 2 marks usage/configuration errors, 3 marks
numerical failures.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import math
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..bat import BatConfig, StepDiagnostics, build_program, candidate_set, svd_reduce
from ..lab import (
    NumericalError,
    fit_hidden_state,
    eym_residual,
    model_logprob_matrix,
    synth_true_matrix,
    truncated_rank_experiment,
)
from ..linprog import UnresolvedError, solve_feasibility
from ..prob import RNG_ALGORITHM, make_rng, softmax
from ..truncation import ConfigError, TruncationRule
from .corpus import Corpus, sample_corpus
from .hrr import HrrTask, match_param
from .model import FormatError, build_toy_model, load_model, save_model, toy_example_model
from .sampling import Sampler, generate

EXIT_USAGE = 2
EXIT_NUMERICAL = 3
TOY_DELTA = math.log(1.9)
TOY_H = 2.55

RULE_HELP = (
    "rule such as epsilon:0.0009, eta:0.002, nucleus:0.95, topk:50 or tau:0.3; "
    "prefix ba- for the basis-aware variant (ba-nucleus is experimental)"
)


def _sampler(text: str) -> Sampler:
    try:
        return Sampler.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _tokens(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad token list {text!r}") from None


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--out", type=Path, default=None, help="write CSV here instead of stdout")
    common.add_argument("--constraints", type=int, default=20, metavar="C",
                        help="number of basis constraints c (capped at d; default 20)")
    common.add_argument("--max-retries", type=int, default=32, help="BAT rejections before argmax fallback")
    common.add_argument("--tol", type=float, default=1e-8, help="solver / fit tolerance")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="bat-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    p = add("sample", "generate tokens from a model file; writes per-step diagnostics")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--rule", type=_sampler, default=Sampler.parse("ba-eta:0.002"), help=RULE_HELP)
    p.add_argument("--len", type=int, default=100, dest="length")
    p.add_argument("--prefix", type=_tokens, default=[], help="space-separated prefix token ids")
    p.add_argument("--audit", action="store_true", help="verify each token against the full accepted set")

    p = add("candidates", "accepted set of a model's next-token distribution")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--rule", type=_sampler, default=Sampler.parse("ba-eta:0.002"), help=RULE_HELP)
    p.add_argument("--prefix", type=_tokens, default=[])

    p = add("hrr", "human-text rejection rate of a rule on a corpus")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--rule", type=_sampler, required=True, help=RULE_HELP)
    p.add_argument("--positions", type=int, default=None,
                   help="score this many positions drawn uniformly without replacement")

    p = add("match-param", "find the target parameter whose HRR equals the reference rule's")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--reference", type=_sampler, required=True, help=RULE_HELP)
    p.add_argument("--target", required=True, help="target method, e.g. ba-epsilon or ba-tau")
    p.add_argument("--lo", type=float, default=None)
    p.add_argument("--hi", type=float, default=None)
    p.add_argument("--positions", type=int, default=None)

    p = add("eym", "best rank-r approximation error of a random model log-probability matrix")
    p.add_argument("--v", type=int, default=64)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--n", type=int, default=96)

    p = add("rank-experiment", "numeric rank of log-probabilities before and after truncation")
    p.add_argument("--v", type=int, default=256)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--rule", type=TruncationRule.parse, default=TruncationRule.parse("epsilon:0.001"))
    p.add_argument("--instances", type=int, default=1)

    p = add("fit", "fit hidden states to synthetic true distributions")
    p.add_argument("--v", type=int, default=64)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--support-frac", type=float, default=0.6)
    p.add_argument("--instances", type=int, default=10)

    add("toy-demo", "three-token, one-dimension example: a low-probability token that is provably in the support")

    p = add("make-toy", "build a random toy model (.bam) and a corpus (.tok) sampled from its ground truth")
    p.add_argument("--v", type=int, default=32)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--support-frac", type=float, default=0.5)
    p.add_argument("--model-out", type=Path, required=True)
    p.add_argument("--corpus-out", type=Path, default=None)
    p.add_argument("--docs", type=int, default=100)
    p.add_argument("--doc-len", type=int, default=101)
    return parser


def _config(args, rule: Sampler | None = None) -> BatConfig:
    kwargs = dict(c=args.constraints, max_retries=args.max_retries, tol=args.tol)
    if rule is not None and rule.basis_aware:
        kwargs["base_rule"] = rule.rule
    return BatConfig(**kwargs)


def _c(args, model) -> int:
    if args.constraints < 1:
        raise ConfigError("--constraints must be at least 1")
    return min(args.constraints, model.hidden_size)


def cmd_sample(args):
    model = load_model(args.model)
    config = _config(args, args.rule)
    gen = generate(model, args.prefix, args.rule, args.length, args.seed, config, audit=args.audit)
    return str(args.rule), StepDiagnostics.columns(), [d.row() for d in gen.diagnostics]


def cmd_candidates(args):
    model = load_model(args.model)
    p = model.distribution(args.prefix)
    accepted = args.rule.accepted_set(p, model.basis(_c(args, model)), args.tol)
    rows = [[i, float(p[i])] for i in sorted(accepted)]
    return str(args.rule), ["token", "p_hat"], rows


def cmd_hrr(args):
    model = load_model(args.model)
    corpus = Corpus.load(args.corpus)
    task = HrrTask(corpus, model, args.positions, args.seed, _c(args, model), args.tol)
    report, _ = task.report(args.rule)
    return str(args.rule), ["method", "parameter", "rejected", "total", "hrr"], [report.row()]


def cmd_match_param(args):
    model = load_model(args.model)
    corpus = Corpus.load(args.corpus)
    target = Sampler.parse(f"{args.target}:{0.5}") if ":" not in args.target else Sampler.parse(args.target)
    task = HrrTask(corpus, model, args.positions, args.seed, _c(args, model), args.tol)
    res = match_param(task, args.reference, target, args.lo, args.hi)
    cols = ["method", "parameter", "hrr", "reference", "reference_hrr", "rejected", "reference_rejected",
            "total", "iterations", "converged"]
    row = [res.target.method, res.parameter, res.target.hrr, str(args.reference), res.reference.hrr,
           res.target.rejected, res.reference.rejected, res.target.total, res.iterations, res.converged]
    return f"{args.reference} -> {target.method}", cols, [row]


def cmd_eym(args):
    rng = make_rng(args.seed)
    W = rng.standard_normal((args.v, args.d))
    H = rng.standard_normal((args.d, args.n))
    A = model_logprob_matrix(W, H)
    rows = [[r, eym_residual(A, r)] for r in range(1, min(A.shape) + 1)]
    return "", ["rank", "residual"], rows


def cmd_rank_experiment(args):
    rows = []
    for inst in range(args.instances):
        rng = make_rng(args.seed, stream=inst)
        W = rng.standard_normal((args.v, args.d))
        H = rng.standard_normal((args.d, args.n))
        exp = truncated_rank_experiment(W, H, args.rule)
        rows += [[inst, *row] for row in exp.curve]
    return str(args.rule), ["instance_id", "n_prefixes", "pre_rank", "post_rank"], rows


def cmd_fit(args):
    rows = []
    for inst in range(args.instances):
        truth = synth_true_matrix(args.v, 1, args.support_frac, seed=args.seed * 100003 + inst)
        W = make_rng(args.seed, stream=inst + 1).standard_normal((args.v, args.d))
        rep = fit_hidden_state(W, truth.column(0), tol=args.tol)
        rows.append([inst, rep.iterations, rep.grad_norm, rep.ce])
    return "", ["instance_id", "iterations", "grad_norm", "ce"], rows


def cmd_toy_demo(args):
    model, truth = toy_example_model()
    p_hat = softmax(model.W[:, 0] * TOY_H)
    basis = svd_reduce(model.W, 1)
    accepted = candidate_set(p_hat, basis, TOY_DELTA, args.tol)
    witness = solve_feasibility(build_program(p_hat, basis, TOY_DELTA, 0), tol=args.tol).witness
    if accepted != frozenset({1, 2}):
        raise NumericalError(f"toy candidate set {sorted(accepted)} differs from [1, 2]")
    p_star = truth.column(0)
    rows = [
        [i, float(p_hat[i]), float(p_star[i]), i in accepted, float(witness[i]) if witness is not None else ""]
        for i in range(3)
    ]
    return f"ba-tau:{1 - 1 / 1.9:.6f}", ["token", "p_hat", "p_star", "accepted", "witness_for_token0"], rows


def cmd_make_toy(args):
    model, truth = build_toy_model(args.v, args.d, args.m, args.seed, args.support_frac, args.tol)
    save_model(model, args.model_out)
    rows = [["model", str(args.model_out), len(model.contexts)]]
    if args.corpus_out is not None:
        corpus = sample_corpus(truth, args.m, args.docs, args.doc_len, args.seed)
        corpus.save(args.corpus_out)
        rows.append(["corpus", str(args.corpus_out), corpus.n_tokens])
    return "", ["artifact", "path", "size"], rows


COMMANDS = {
    "sample": cmd_sample,
    "candidates": cmd_candidates,
    "hrr": cmd_hrr,
    "match-param": cmd_match_param,
    "eym": cmd_eym,
    "rank-experiment": cmd_rank_experiment,
    "fit": cmd_fit,
    "toy-demo": cmd_toy_demo,
    "make-toy": cmd_make_toy,
}


def write_csv(stream, args, rule: str, columns: list, rows: list) -> None:
    for key, value in [("seed", args.seed), ("version", __version__), ("rule", rule),
                       ("rng", RNG_ALGORITHM), ("command", args.command)]:
        stream.write(f"# {key}={value}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rule, columns, rows = COMMANDS[args.command](args)
    except (ConfigError, FormatError, FileNotFoundError, ValueError) as exc:
        print(f"bat-lab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, UnresolvedError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"bat-lab {args.command}: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    with (open(args.out, "w", newline="") if args.out else contextlib.nullcontext(sys.stdout)) as stream:
        write_csv(stream, args, rule, columns, rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
