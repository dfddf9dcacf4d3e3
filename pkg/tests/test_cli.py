import csv
import json

import pytest

from cempsync import io
from cempsync.cli import main, parse_grid


def gen(tmp_path, *extra, name="inst.json"):
    out = tmp_path / name
    assert main(["gen", *extra, "--out", str(out)]) == 0
    return out


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def k20(tmp_path):
    return gen(tmp_path, "--group", "z2", "--model", "adversarial", "--n", "20", "--complete",
               "--bad-edges", "0,1", "--seed", "1")


def test_gen_ucm(tmp_path):
    out = gen(tmp_path, "--group", "so2", "--model", "ucm", "--n", "200", "--p", "0.5", "--q", "0.5",
              "--seed", "7")
    meta = io.read_json(io.meta_path(out))
    assert meta["q"] == 0.5 and meta["seed"] == 7
    assert 0 < meta["lambda"] <= 1
    inst, _ = io.read_instance(out)
    assert inst.graph.n == 200


def test_gen_k20(k20):
    meta = io.read_json(io.meta_path(k20))
    assert meta["lambda"] == pytest.approx(1 / 18)
    inst, _ = io.read_instance(k20)
    assert inst.bad.sum() == 1 and inst.graph.m == 190


@pytest.mark.parametrize("argv", [
    ["gen", "--group", "so2", "--model", "ucm", "--n", "20", "--p", "0.5", "--seed", "1"],
    ["gen", "--group", "so2", "--model", "ucm", "--n", "20", "--p", "0.5", "--q", "0.5"],
    ["gen", "--group", "perm", "--model", "ucm", "--n", "20", "--p", "0.5", "--q", "0.5", "--seed", "1"],
    ["gen", "--group", "z2", "--model", "ucm", "--n", "20", "--q", "0.5", "--seed", "1"],
    ["gen", "--group", "z2", "--model", "adversarial", "--n", "20", "--complete", "--noise", "bounded",
     "--delta", "0.1", "--seed", "1"],
    ["stats"],
])
def test_usage_errors(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path / "x.json")] if argv[0] == "gen" else argv) == 1
    assert "error" in capsys.readouterr().err


def test_run_auto_bound(k20, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--instance", str(k20), "--rule", "a", "--schedule", "explicit",
                 "--beta0", "18", "--r", "4", "--T", "8", "--out", str(out)]) == 0
    for row in read_csv(out / "trace.csv"):
        assert float(row["eps_max"]) <= 1 / (18 * 4 ** int(row["t"]))
    cfg = io.read_json(out / "config.json")
    assert cfg["rule"] == "A" and len(cfg["betas"]) == 8

    auto = tmp_path / "auto"
    assert main(["run", "--instance", str(k20), "--rule", "A", "--schedule", "auto", "--T", "8",
                 "--out", str(auto)]) == 0
    for row in read_csv(auto / "trace.csv"):
        assert float(row["eps_max"]) <= 18.0 ** -1 + 1e-15
    est = read_csv(auto / "estimates.csv")
    assert list(est[0]) == list(io.ESTIMATE_COLUMNS) and len(est) == 190


def test_run_rule_b_explicit(k20, tmp_path):
    out = tmp_path / "b"
    assert main(["run", "--instance", str(k20), "--rule", "b", "--beta0", "4.5", "--r", "4",
                 "--schedule", "explicit", "--T", "8", "--out", str(out)]) == 0
    for row in read_csv(out / "trace.csv"):
        assert float(row["eps_max"]) <= 1 / (4 * 4.5 * 4 ** int(row["t"]))


def test_run_infeasible_exit_2(k20, tmp_path, capsys):
    code = main(["run", "--instance", str(k20), "--rule", "A", "--schedule", "auto", "--lam", "0.3",
                 "--out", str(tmp_path / "r")])
    assert code == 2
    assert "λ < 1/4 violated" in capsys.readouterr().err


def test_run_group_mismatch(k20, tmp_path, capsys):
    assert main(["run", "--instance", str(k20), "--group", "so2", "--out", str(tmp_path / "r")]) == 1
    assert "group" in capsys.readouterr().err


def test_eval(k20, tmp_path, capsys):
    run_dir = tmp_path / "run"
    main(["run", "--instance", str(k20), "--T", "8", "--out", str(run_dir)])
    capsys.readouterr()
    assert main(["eval", "--instance", str(k20), "--run", str(run_dir), "--out", str(tmp_path / "e.json")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert set(res) >= {"precision", "recall", "kept", "threshold", "max_align_error",
                        "mean_align_error", "connected"}
    assert res["precision"] == 1.0 and res["recall"] == 1.0 and res["kept"] == 189
    assert res["max_align_error"] == 0.0 and res["connected"] is True
    assert main(["eval", "--instance", str(k20), "--run", str(run_dir), "--tau", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["kept"] == 190


def test_run_is_byte_identical(tmp_path):
    args = ["--group", "so3", "--model", "ucm", "--n", "40", "--p", "0.6", "--q", "0.3", "--seed", "4"]
    a = gen(tmp_path, *args, name="a.json")
    b = gen(tmp_path, *args, name="b.json")
    assert a.read_bytes() == b.read_bytes()
    for d in ("r1", "r2"):
        assert main(["run", "--instance", str(a), "--rule", "B", "--schedule", "ucm", "--T", "6",
                     "--out", str(tmp_path / d)]) == 0
    for f in ("trace.csv", "estimates.csv", "config.json"):
        assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()


SWEEP = ["sweep", "--group", "so2", "--model", "ucm", "--n", "30", "--p", "1", "--rule", "A",
         "--schedule", "ucm", "--T", "6", "--seed", "3"]


def test_sweep_rows_and_determinism(tmp_path):
    for d in ("s1", "s2"):
        assert main(SWEEP + ["--q", "0.1:0.3:0.1", "--seeds", "2", "--out", str(tmp_path / d)]) == 0
    rows = read_csv(tmp_path / "s1" / "summary.csv")
    assert len(rows) == 6
    assert [float(r["q"]) for r in rows] == [0.1, 0.1, 0.2, 0.2, 0.3, 0.3]
    assert (tmp_path / "s1" / "summary.csv").read_bytes() == (tmp_path / "s2" / "summary.csv").read_bytes()
    assert len(read_csv(tmp_path / "s1" / "timing.csv")) == 6
    assert io.read_json(tmp_path / "s1" / "config.json")["command"] == "sweep"


def test_sweep_delta_increasing(tmp_path):
    out = tmp_path / "d"
    assert main(["sweep", "--group", "so2", "--model", "adversarial", "--n", "60", "--p", "1",
                 "--bad-fraction", "0.01", "--noise", "bounded", "--delta", "0,0.02,0.05",
                 "--rule", "A", "--T", "20", "--seeds", "3", "--seed", "1", "--out", str(out)]) == 0
    rows = read_csv(out / "summary.csv")
    assert len(rows) == 9
    eps = {}
    for r in rows:
        if r["feasible"] == "1":
            eps.setdefault(float(r["delta"]), []).append(float(r["eps_max"]))
    means = [sum(v) / len(v) for _, v in sorted(eps.items())]
    assert len(means) == 3
    assert means[0] < means[1] < means[2]


@pytest.mark.parametrize("extra", [["--q", "0.5:0.1:0.1"], ["--q", ""], ["--seeds", "0", "--q", "0.2"],
                                   ["--q", "0.2", "--delta", "0.1"]])
def test_sweep_errors(extra, tmp_path):
    assert main(SWEEP + extra + ["--out", str(tmp_path / "e")]) == 1


def test_parse_grid():
    assert parse_grid("0.1,0.2") == [0.1, 0.2]
    assert parse_grid("0.1:0.9:0.1") == pytest.approx([0.1 * k for k in range(1, 10)])
    assert len(parse_grid("0.1:0.9:0.1")) == 9


def test_stats(capsys):
    assert main(["stats", "--group", "so2", "--q", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "so2" in out and "0.5" in out
    assert main(["stats", "--group", "perm", "--N", "4", "--q", "0.5"]) == 0
    assert "infeasible" in capsys.readouterr().out
