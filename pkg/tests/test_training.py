import json

import numpy as np
import pytest

from mixencoder.checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from mixencoder.corpus import CorpusSizes, gen_synthetic
from mixencoder.numcore import warmup_linear
from mixencoder.training import MetricsLog, ModelScorer, TrainConfig, TrainingDiverged, train

from helpers import tiny_model, tokens

SMALL = CorpusSizes(train=32, test=8, candidates=4, num_keys=12, num_fillers=20, query_len=(3, 5), candidate_len=(3, 6))


def corpus(task="ranking", sizes=SMALL, seed=0):
    return gen_synthetic(task, sizes, seed)


def model(name="mix-a", **kw):
    return tiny_model(name, vocab_size=50, float_bits=32, **kw)


def test_resolved_batch_defaults():
    cfg = TrainConfig()
    assert cfg.resolved_batch("ranking") == 64
    assert cfg.resolved_batch("classification") == 16
    assert cfg.resolved_batch("ranking", "cross") == 16
    assert TrainConfig(batch_size=8).resolved_batch("ranking") == 8


def test_zero_learning_rate_leaves_parameters_unchanged():
    m = model()
    before = {k: v.copy() for k, v in m.state_dict().items()}
    train(m, corpus(), TrainConfig(epochs=1, batch_size=8, lr=0.0), eval_records=[])
    for k, v in m.state_dict().items():
        assert np.array_equal(v, before[k]), k


def test_one_batch_overfit():
    c = corpus(sizes=CorpusSizes(train=4, test=0, candidates=4, num_keys=12, num_fillers=20,
                                 query_len=(3, 5), candidate_len=(3, 6)))
    log = MetricsLog()
    train(model(), c, TrainConfig(epochs=500, batch_size=4, lr=1e-3, warmup_frac=0.0, eval_every=0), log)
    losses = log.losses()
    assert len(losses) <= 500
    assert min(losses) < 0.01


def test_same_seed_same_loss_curve():
    curves = []
    for _ in range(2):
        log = MetricsLog()
        train(model(), corpus(), TrainConfig(epochs=2, batch_size=8, seed=3), log)
        curves.append([{k: v for k, v in r.items() if k != "seconds"} for r in log.records])
    assert curves[0] == curves[1]
    log = MetricsLog()
    train(model(), corpus(), TrainConfig(epochs=2, batch_size=8, seed=4), log)
    assert log.losses() != [r["loss"] for r in curves[0] if "loss" in r]


def test_nan_loss_aborts_with_diagnostic(tmp_path):
    m = model()
    m.encoder.tok_emb.data[...] = np.nan
    log = MetricsLog(tmp_path / "log.jsonl")
    with pytest.raises(TrainingDiverged, match="step 0"):
        train(m, corpus(), TrainConfig(epochs=1, batch_size=8), log)
    log.close()
    last = json.loads((tmp_path / "log.jsonl").read_text().splitlines()[-1])
    assert last["error"] == "non-finite loss"


def test_metrics_log_records(tmp_path):
    log = MetricsLog(tmp_path / "m.jsonl")
    result = train(model(), corpus(), TrainConfig(epochs=2, batch_size=8), log)
    log.close()
    lines = [json.loads(x) for x in (tmp_path / "m.jsonl").read_text().splitlines()]
    assert {"step", "epoch", "loss"} <= set(lines[0])
    metric_lines = [x for x in lines if "metric" in x]
    assert {x["metric"] for x in metric_lines} == {"mrr", "r1@4"}
    assert [x["epoch"] for x in metric_lines] == [1, 1, 2, 2]
    assert set(result) == {"mrr", "r1@4"}


def test_classification_training_runs():
    c = corpus("classification", CorpusSizes(train=32, test=8, candidates=1, num_keys=12, num_fillers=20,
                                             query_len=(3, 5), candidate_len=(3, 6)))
    for name in ("mix-a", "dual", "cross"):
        result = train(model(name, task="classification"), c, TrainConfig(epochs=1))
        assert 0.0 <= result["accuracy"] <= 1.0


def test_too_few_queries_for_a_batch():
    with pytest.raises(ValueError, match="fewer than one batch"):
        train(model(), corpus(), TrainConfig(epochs=1, batch_size=64))


def test_early_stop_on_target():
    log = MetricsLog()
    train(model(), corpus(), TrainConfig(epochs=5, batch_size=8, target={"mrr": 0.0}), log)
    assert max(r["epoch"] for r in log.records) == 1


def test_warmup_then_linear_decay():
    assert warmup_linear(0, 100, 0.1) == pytest.approx(0.1)
    assert warmup_linear(9, 100, 0.1) == pytest.approx(1.0)
    assert warmup_linear(99, 100, 0.1) < warmup_linear(50, 100, 0.1) < 1.0


# -- checkpoints ----------------------------------------------------------

@pytest.mark.parametrize("name", ["mix-c", "dual", "poly", "maxsim", "cross"])
def test_checkpoint_round_trip(tmp_path, name):
    m = model(name, num_layers=3)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m)
    back = load_checkpoint(path)
    assert back.cfg == m.cfg
    for k, v in m.state_dict().items():
        assert back.state_dict()[k].tobytes() == v.tobytes()
    q, qm = tokens(np.random.default_rng(0), 2, 5)
    c, cm = tokens(np.random.default_rng(1), 3, 6)
    np.testing.assert_array_equal(back.score_prepared(q, qm, back.prepare_candidates(c, cm)),
                                  m.score_prepared(q, qm, m.prepare_candidates(c, cm)))


def test_checkpoint_errors(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model())
    raw = path.read_bytes()
    for blob, needle in [(b"NOPE" + raw[4:], "bad magic"), (raw[:4] + b"\x07\x00\x00\x00" + raw[8:], "version"),
                         (raw[:-10], "truncated"), (raw + b"\x00", "trailing")]:
        path.write_bytes(blob)
        with pytest.raises(CheckpointError, match=needle):
            read_checkpoint(path)


def test_model_scorer_orders_candidates_per_query():
    c = corpus()
    m = model()
    vocab = c.vocab(m.cfg.kmax)
    scores = ModelScorer(m, vocab, chunk=3)(c.test)
    assert len(scores) == len(c.test) and all(s.shape == (4,) for s in scores)
