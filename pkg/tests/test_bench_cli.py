import json

import numpy as np
import pytest

from strassen_lab import bench
from strassen_lab.cli import main


def test_bench_records_and_csv(tmp_path):
    recs = bench.bench_forward("strassen", "fast", [1, 4], [2], reps=5)
    assert [r.status for r in recs] == ["ok", "ok"]
    assert all(r.median_seconds >= 0 and r.peak_bytes > 0 for r in recs)
    path = bench.write_csv(recs, tmp_path / "b.csv")
    assert path.read_text().splitlines()[0] == ",".join(bench.CSV_COLUMNS)
    back = bench.read_csv(path)
    assert [(r.n, r.d, r.status) for r in back] == [(1, 2, "ok"), (4, 2, "ok")]


def test_bench_guards():
    with pytest.raises(ValueError):
        bench.bench_forward("standard", "naive", [4], [2], reps=3)
    rec = bench.bench_forward("third_order", "naive", [4096], [8], memory_limit=1 << 20)[0]
    assert rec.status == "skipped_memory"
    rec = bench.bench_forward("standard", "fast", [4], [2], track_memory=False)[0]
    assert rec.status == "failed_ValueError"


@pytest.mark.parametrize("mech,path", [("standard", "naive"), ("triangular", "naive"),
                                       ("third_order", "naive"), ("strassen", "naive"),
                                       ("matmul", "naive"), ("matmul", "strassen"), ("matmul", "blas")])
def test_every_workload_runs(mech, path):
    assert bench.bench_forward(mech, path, [3], [2], track_memory=False)[0].status == "ok"


def test_cli_gen_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["gen", "binrel", "--seed", "9", "--count", "5", "--out", str(a)]) == 0
    assert main(["gen", "binrel", "--seed", "9", "--count", "5", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["gen", "disj", "--p", "1010", "--q", "0111"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["y"][1] == 1
    assert main(["gen", "match3", "--count", "6"]) == 2
    assert main(["gen", "funccomp", "--modulus", "5"]) == 2


def test_cli_verify(tmp_path, capsys):
    assert main(["verify", "binrel", "--random", "5", "--size", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["exact"] == 5
    data = tmp_path / "q.jsonl"
    main(["gen", "quotient", "--count", "4", "--nmin", "2", "--nmax", "4", "--out", str(data)])
    assert main(["verify", "quotient", "--instances", str(data), "--path", "fast"]) == 0
    assert main(["verify", "binrel", "--instances", str(data)]) == 2


def test_cli_splitvc(tmp_path, capsys):
    table = tmp_path / "f.txt"
    table.write_text("2 2\n0 0 0\n0 1 1\n1 0 1\n1 1 0\n")
    assert main(["splitvc", "--table", str(table)]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 1
    assert main(["splitvc", "--lemma", "disj", "--param", "2", "--exhaustive"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] and out["exhaustive"]["value"] == 2
    assert main(["splitvc", "--lemma", "ind", "--param", "1"]) == 1
    assert main(["splitvc", "--lemma", "ind"]) == 2
    assert main(["splitvc", "--table", str(table), "--budget", "2"]) == 1


def test_cli_gradcheck_train_bench(tmp_path, capsys, monkeypatch):
    assert main(["gradcheck", "--mechanism", "layer", "--points", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["max_relative_error"] <= 1e-5
    cfg = tmp_path / "t.cfg"
    cfg.write_text("task = funccomp\nepochs = 1\nd = 4\n")
    assert main(["train", "--config", str(cfg), "--count", "30", "--nmin", "4", "--nmax", "5", "--lr", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["epochs"] == 1
    assert main(["train", "--d", "x"]) == 2
    monkeypatch.setenv(bench.OUT_ENV, str(tmp_path))
    assert main(["bench", "--mechanism", "standard", "--n-list", "2,3", "--d-list", "2"]) == 0
    assert len(bench.read_csv(tmp_path / "bench.csv")) == 2
    assert main(["nonsense"]) == 2
