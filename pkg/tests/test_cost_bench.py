import json

import numpy as np
import pytest

from mixencoder.bench import BenchError, bench_latency, flop_count, online_fn, partition
from mixencoder.cost import CostError, CostModel, cost_eval, measured_interaction_flops_per_candidate
from mixencoder.numcore import flops

from helpers import tiny_model, tokens


def test_cost_table_examples():
    pre, online = cost_eval("cross", h=64, q=8, d=8, n_c=10)
    assert pre == 0
    assert online == 10 * (64 * 256 + 4096 * 16) == 819200
    assert cost_eval("mix", h=768, q=9, k=1, n_c=0)[1] == cost_eval("dual", h=768, q=9)[1] == 768 * 81 + 768 ** 2 * 9
    assert cost_eval("dual", h=4, q=3, d=5) == (4 * 25 + 16 * 5, 4 * 9 + 16 * 3)


def test_cost_linear_in_candidates():
    vals = [cost_eval("mix", h=64, q=8, d=8, k=2, n_c=n)[1] for n in range(6)]
    diffs = np.diff(vals)
    assert (diffs == diffs[0]).all() and diffs[0] == (2 + 8 + 64) * 64 * 2
    assert CostModel("mix").per_candidate(64, 8, 2) == diffs[0]


def test_cost_errors():
    for bad in (dict(h=0, q=1), dict(h=1, q=-1), dict(h=1, q=1, k=0), dict(h=1, q=1, n_c=-1), dict(h=1.5, q=1)):
        with pytest.raises(CostError):
            cost_eval("mix", **bad)
    with pytest.raises(CostError):
        cost_eval("poly", 1, 1)
    with pytest.raises(CostError):
        CostModel("dual").per_candidate(1, 1, 1)


def test_measured_slope_formula_matches_counted_flops():
    model = tiny_model("mix-a", float_bits=32)
    rng = np.random.default_rng(0)
    q, qm = tokens(rng, 1, 9)
    counts = {}
    for n in (1, 3):
        E0, h0 = rng.normal(size=(n, 1, 16)).astype(np.float32), rng.normal(size=(n, 16)).astype(np.float32)
        counts[n] = flop_count(lambda: model.score_prepared(q, qm, (E0, h0)))
    slope = (counts[3]["scope:interaction/cross_attention"] - counts[1]["scope:interaction/cross_attention"]) / 2
    assert slope == measured_interaction_flops_per_candidate(16, 9, 1)


def test_partition_labels():
    out = partition({"query": 5, "interaction/ffn": 2, "candidate": 3, "pair": 1, "head": 7})
    assert out == {"query_encoding": 5, "candidate_interaction": 6, "head": 7}


def test_mix_query_flops_constant_in_candidates():
    model = tiny_model("mix-b", num_layers=3, float_bits=32)
    rng = np.random.default_rng(1)
    q, qm = tokens(rng, 1, 8)
    seen = set()
    for n in (1, 10, 100):
        c, cm = tokens(rng, n, 8, min_len=3)
        run, _ = online_fn(model, q, qm, c, cm)
        seen.add(flop_count(run)["query_encoding"])
    assert len(seen) == 1 and seen.pop() > 0


def test_cross_flops_exactly_linear():
    model = tiny_model("cross", float_bits=32)
    rng = np.random.default_rng(2)
    q, qm = tokens(rng, 1, 6)
    c, cm = tokens(rng, 10, 6)
    one = flop_count(online_fn(model, q, qm, c[:1], cm[:1])[0])["total"]
    ten = flop_count(online_fn(model, q, qm, c, cm)[0])["total"]
    assert ten == 10 * one


def test_flop_counter_scopes_nest():
    with flops.count_flops() as counter:
        with flops.flop_scope("outer"):
            flops.record(3)
            with flops.flop_scope("inner"):
                flops.record(4)
    assert counter.total() == 7
    assert counter.counts["inner"] == 4


def test_bench_validation_and_report():
    models = {"dual": tiny_model("dual", float_bits=32), "mix-a": tiny_model("mix-a", float_bits=32),
              "cross": tiny_model("cross", float_bits=32)}
    with pytest.raises(BenchError):
        bench_latency(models, [2], reps=4)
    with pytest.raises(BenchError):
        bench_latency(models, [2], warmups=1)
    with pytest.raises(BenchError):
        bench_latency(models, [0])
    report = bench_latency(models, [2, 4], q_len=6, t_len=6)
    assert report.models() == ["dual", "mix-a", "cross"] and report.ns() == [2, 4]
    e = report.get("mix-a", 4)
    assert len(e.times_ms) == 5 and e.median_ms == sorted(e.times_ms)[2]
    assert e.cache_bytes == 26 + 4 * (8 + 4 * (16 + 16))
    assert report.get("cross", 2).speedup_vs_cross == 1.0
    assert json.loads(report.to_json())["entries"][0]["model"] == "dual"
    assert "mix-a" in report.table()
