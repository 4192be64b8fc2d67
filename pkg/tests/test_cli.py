import json
import subprocess
import sys

import pytest

from mixencoder.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cost_prints_evaluated_expression(capsys):
    code, out, _ = run(["cost", "--model", "mix", "--h", "768", "--q", "9", "--k", "1", "--nc", "1000"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["online"]["expression"] == "h*q^2 + h^2*q + N_c*(k+q+h)*h*k"
    assert data["online"]["value"] == 768 * 81 + 768 ** 2 * 9 + 1000 * (1 + 9 + 768) * 768
    code, out, _ = run(["cost", "--model", "cross", "--h", "64", "--q", "8", "--d", "8", "--nc", "10"], capsys)
    assert json.loads(out)["online"]["value"] == 819200


def test_gen_twice_identical(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(["gen", "--task", "ranking", "--queries", "100", "--seed", "7", "--out", str(tmp_path / name)],
                   capsys)[0] == 0
    for f in ("train.jsonl", "test.jsonl", "vocab.tsv", "meta.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert len((tmp_path / "a" / "train.jsonl").read_text().splitlines()) == 100
    assert len((tmp_path / "a" / "test.jsonl").read_text().splitlines()) == 10


def test_eval_oracle_scorer(tmp_path, capsys):
    run(["gen", "--queries", "50", "--out", str(tmp_path / "c")], capsys)
    code, out, _ = run(["eval", "--corpus", str(tmp_path / "c"), "--scorer", "oracle"], capsys)
    assert code == 0 and json.loads(out) == {"mrr": 1.0, "r1@10": 1.0}


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["cost", "--h", "1", "--q", "1", "--bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["train", "--model", "bert", "--corpus", "x"])
    assert exc.value.code == 2


def test_runtime_errors_exit_1(tmp_path, capsys):
    code, _, err = run(["eval", "--corpus", str(tmp_path / "missing"), "--scorer", "oracle"], capsys)
    assert code == 1 and "not a corpus directory" in err
    code, _, err = run(["cost", "--model", "cross", "--h", "4", "--q", "2"], capsys)
    assert code == 1 and "--d" in err
    code, _, _ = run(["cost", "--model", "mix", "--h", "0", "--q", "2"], capsys)
    assert code == 1


def test_train_precompute_eval_pipeline(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d_model": 16, "num_heads": 2, "num_layers": 2, "ffn_dim": 32,
                               "epochs": 1, "batch_size": 16}))
    corpus = tmp_path / "c"
    run(["gen", "--queries", "64", "--test-queries", "8", "--out", str(corpus)], capsys)
    ckpt = tmp_path / "m.ckpt"
    code, out, err = run(["train", "--model", "mix-a", "--config", str(cfg), "--corpus", str(corpus),
                          "--out", str(ckpt), "--log", str(tmp_path / "log.jsonl")], capsys)
    assert code == 0, err
    assert json.loads(out)["model"] == "mix-a"
    assert (tmp_path / "log.jsonl").read_text().count('"loss"') == 4
    cache = tmp_path / "c.cache"
    code, out, err = run(["precompute", "--checkpoint", str(ckpt), "--corpus", str(corpus), "--out", str(cache)],
                         capsys)
    assert code == 0, err
    assert json.loads(out)["entries"] == 80
    _, with_cache, _ = run(["eval", "--corpus", str(corpus), "--checkpoint", str(ckpt), "--cache", str(cache)], capsys)
    _, inline, _ = run(["eval", "--corpus", str(corpus), "--checkpoint", str(ckpt)], capsys)
    a, b = json.loads(with_cache), json.loads(inline)
    assert a.keys() == b.keys() and all(abs(a[k] - b[k]) <= 1e-6 for k in a)


def test_ablate_and_bench_small(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d_model": 16, "num_heads": 2, "num_layers": 2, "ffn_dim": 32, "batch_size": 16}))
    code, out, err = run(["ablate", "--config", str(cfg), "--queries", "64", "--epochs", "1",
                          "--log-dir", str(tmp_path / "logs")], capsys)
    assert code == 0, err
    data = json.loads(out)
    assert set(data["results"]) == {"original", "no_H", "no_E", "eq6"}
    assert all(data["pathways_isolated"].values())
    assert sorted(p.name for p in (tmp_path / "logs").iterdir())[0] == "eq6.jsonl"
    code, out, err = run(["bench", "--config", str(cfg), "--models", "dual", "mix-a", "cross", "--n", "2", "4",
                          "--q-len", "6", "--t-len", "6", "--json", str(tmp_path / "b.json")], capsys)
    assert code == 0, err
    assert "speedup" in out
    assert len(json.loads((tmp_path / "b.json").read_text())["entries"]) == 6
    code, _, _ = run(["bench", "--n", "2", "--reps", "3"], capsys)
    assert code == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mixencoder", "cost", "--h", "2", "--q", "3", "--nc", "0"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["online"]["value"] == 2 * 9 + 4 * 3
