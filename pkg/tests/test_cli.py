import csv
import io
import subprocess
import sys

import pytest

from bat_sampling import __version__
from bat_sampling.harness import Corpus, Sampler, hrr, load_model
from bat_sampling.harness.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def parse(text):
    meta = dict(line[2:].split("=", 1) for line in text.splitlines() if line.startswith("# "))
    rows = list(csv.reader(io.StringIO("\n".join(l for l in text.splitlines() if not l.startswith("#")))))
    return meta, rows[0], rows[1:]


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    assert main(["make-toy", "--v", "10", "--d", "3", "--m", "1", "--seed", "4", "--model-out", str(d / "m.bam"),
                 "--corpus-out", str(d / "c.tok"), "--docs", "10", "--doc-len", "21",
                 "--out", str(d / "make.csv")]) == 0
    return d


def test_make_toy_outputs(files):
    meta, cols, rows = parse((files / "make.csv").read_text())
    assert meta["seed"] == "4" and meta["version"] == __version__ and meta["command"] == "make-toy"
    assert meta["rng"] == "numpy.PCG64"
    model = load_model(files / "m.bam")
    assert model.vocab_size == 10 and model.hidden_size == 3 and model.order == 1
    assert Corpus.load(files / "c.tok").n_tokens == 210
    # identical seed, identical bytes
    again = files / "again.bam"
    assert main(["make-toy", "--v", "10", "--d", "3", "--m", "1", "--seed", "4", "--model-out", str(again),
                 "--out", str(files / "x.csv")]) == 0
    assert again.read_bytes() == (files / "m.bam").read_bytes()


def test_sample_smoke(files, capsys):
    code, out, _ = run(capsys, "sample", "--model", str(files / "m.bam"), "--rule", "ba-eta:0.002",
                       "--len", "100", "--seed", "7", "--prefix", "3")
    assert code == 0
    meta, cols, rows = parse(out)
    assert meta["rule"] == "ba-eta:0.002" and meta["seed"] == "7"
    assert cols[:6] == ["step", "token", "solver_calls", "fastpath", "retries", "fallback"]
    assert len(rows) == 100 and all(0 <= int(r[1]) < 10 for r in rows)
    code2, out2, _ = run(capsys, "sample", "--model", str(files / "m.bam"), "--rule", "ba-eta:0.002",
                         "--len", "100", "--seed", "7", "--prefix", "3")
    assert out2 == out


def test_hrr_row_equals_library(files, capsys):
    code, out, _ = run(capsys, "hrr", "--corpus", str(files / "c.tok"), "--model", str(files / "m.bam"),
                       "--rule", "epsilon:0.002")
    assert code == 0
    meta, cols, rows = parse(out)
    assert cols == ["method", "parameter", "rejected", "total", "hrr"]
    rep = hrr(Corpus.load(files / "c.tok"), load_model(files / "m.bam"), Sampler.parse("epsilon:0.002"), c=3)
    assert rows == [[str(x) for x in rep.row()]]


def test_match_param_cli(files, capsys):
    code, out, _ = run(capsys, "match-param", "--corpus", str(files / "c.tok"), "--model", str(files / "m.bam"),
                       "--reference", "tau:0.1", "--target", "ba-tau")
    assert code == 0
    _, cols, rows = parse(out)
    row = dict(zip(cols, rows[0]))
    assert row["method"] == "ba-tau" and float(row["parameter"]) >= 0.1


def test_candidates_and_toy_demo(files, capsys):
    code, out, _ = run(capsys, "toy-demo")
    assert code == 0
    _, cols, rows = parse(out)
    assert [r[3] for r in rows] == ["False", "True", "True"]
    assert abs(float(rows[1][4]) - 0.7) <= 0.02 and float(rows[0][4]) == 0.0
    code, out, _ = run(capsys, "candidates", "--model", str(files / "m.bam"), "--rule", "epsilon:0.05",
                       "--prefix", "2")
    assert code == 0
    _, cols, rows = parse(out)
    p = load_model(files / "m.bam").distribution([2])
    assert [int(r[0]) for r in rows] == [i for i in range(10) if p[i] >= 0.05]


def test_lab_subcommands(capsys):
    code, out, _ = run(capsys, "eym", "--v", "12", "--d", "2", "--n", "15")
    assert code == 0
    _, cols, rows = parse(out)
    res = [float(r[1]) for r in rows]
    assert cols == ["rank", "residual"] and len(rows) == 12
    assert res[2] <= 1e-9 * res[0] + 1e-20  # rank <= d + 1
    code, out, _ = run(capsys, "rank-experiment", "--v", "64", "--d", "4", "--n", "80")
    _, cols, rows = parse(out)
    assert code == 0 and cols == ["instance_id", "n_prefixes", "pre_rank", "post_rank"]
    assert int(rows[-1][1]) == 80 and int(rows[-1][2]) <= 5
    code, out, _ = run(capsys, "fit", "--instances", "3", "--v", "20", "--d", "4")
    _, cols, rows = parse(out)
    assert code == 0 and cols == ["instance_id", "iterations", "grad_norm", "ce"] and len(rows) == 3
    assert all(float(r[2]) <= 1e-8 for r in rows)


def test_out_flag(tmp_path, capsys):
    code, out, _ = run(capsys, "toy-demo", "--out", str(tmp_path / "t.csv"))
    assert code == 0 and out == ""
    assert (tmp_path / "t.csv").read_text().startswith("# seed=0\n")


def test_usage_errors_exit_2(files, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--model", str(files / "m.bam"), "--bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["hrr", "--corpus", "c", "--model", "m", "--rule", "ba-topk:3"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    code, _, err = run(capsys, "sample", "--model", str(files / "missing.bam"))
    assert code == 2 and "error" in err
    code, _, err = run(capsys, "make-toy", "--v", "300", "--m", "2", "--model-out", str(files / "big.bam"))
    assert code == 2 and "65536" in err


def test_numerical_failure_exit_3(files, capsys, monkeypatch):
    from bat_sampling.harness import cli
    from bat_sampling.linprog import UnresolvedError

    def boom(*a, **k):
        raise UnresolvedError("iteration cap 1 exceeded")

    monkeypatch.setattr(cli, "generate", boom)
    code, _, err = run(capsys, "sample", "--model", str(files / "m.bam"))
    assert code == 3 and "UnresolvedError" in err


def test_help_marks_ba_nucleus_experimental(capsys):
    with pytest.raises(SystemExit):
        main(["sample", "--help"])
    assert "ba-nucleus is experimental" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bat_sampling", "toy-demo"], capture_output=True, text=True)
    assert res.returncode == 0 and "token,p_hat" in res.stdout
