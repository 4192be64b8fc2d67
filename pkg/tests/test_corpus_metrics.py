import numpy as np
import pytest

from mixencoder.corpus import (
    CONTRADICT,
    ENTAIL,
    NEUTRAL,
    Corpus,
    CorpusError,
    CorpusSizes,
    Record,
    batches,
    gen_synthetic,
    label_rule,
    load_records,
    save_records,
    tokenize,
    tokenize_split,
    trim,
)
from mixencoder.metrics import (
    evaluate,
    mrr,
    oracle_scorer,
    random_scorer,
    rank_of_first_positive,
    recall_at_1,
    reversed_scorer,
)

import oracles

SMALL = CorpusSizes(train=200, test=50)


def keys_of(text):
    return {w for w in text.split() if w.startswith("k")}


def test_generation_is_reproducible(tmp_path):
    a = gen_synthetic("ranking", SMALL, seed=7)
    b = gen_synthetic("ranking", SMALL, seed=7)
    assert a == b
    assert gen_synthetic("ranking", SMALL, seed=8) != a
    a.save(tmp_path / "a")
    b.save(tmp_path / "b")
    for name in ("train.jsonl", "test.jsonl", "vocab.tsv", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert Corpus.load(tmp_path / "a") == a


def test_ranking_positive_always_holds_the_query_key():
    c = gen_synthetic("ranking", CorpusSizes(train=1000, test=100), seed=1)
    for r in c.train + c.test:
        (qkey,) = keys_of(r.query)
        assert len(r.positives) == 1 and len(r.candidates) == 10
        for cid, text in r.candidates:
            assert (qkey in keys_of(text)) == (cid in r.positives)
    ids = [cid for r in c.train + c.test for cid, _ in r.candidates]
    assert len(ids) == len(set(ids))


def test_token_overlap_positive_shares_exactly_one_rare_token():
    c = gen_synthetic("token_overlap", SMALL, seed=2)
    for r in c.train:
        q = keys_of(r.query)
        assert len(q) == 2
        for cid, text in r.candidates:
            shared = q & keys_of(text)
            assert (len(shared) == 1) == (cid in r.positives)


def test_classification_labels_follow_the_rule():
    c = gen_synthetic("classification", SMALL, seed=3)
    labels = set()
    for r in c.train + c.test:
        (cid, text), = r.candidates
        assert label_rule(r.query, text) == r.label
        labels.add(r.label)
    assert labels == {ENTAIL, CONTRADICT, NEUTRAL}
    assert label_rule("w001 k004", "k005 w002") == CONTRADICT
    with pytest.raises(CorpusError):
        label_rule("w001", "k001")


def test_size_errors():
    with pytest.raises(CorpusError, match="capacity"):
        gen_synthetic("ranking", CorpusSizes(num_keys=600, num_fillers=400))
    with pytest.raises(CorpusError):
        gen_synthetic("ranking", CorpusSizes(num_keys=5, candidates=10))
    with pytest.raises(CorpusError):
        gen_synthetic("classification", CorpusSizes(num_keys=7))
    with pytest.raises(CorpusError):
        gen_synthetic("ranking", CorpusSizes(train=0, test=0))
    with pytest.raises(CorpusError):
        gen_synthetic("nli")


def test_record_json_round_trip(tmp_path):
    recs = [Record(1, "a b", [(10, "c"), (11, "d e")], [11]), Record(2, "x", [(2, "y")], [], 1)]
    save_records(tmp_path / "r.jsonl", recs)
    assert load_records(tmp_path / "r.jsonl") == recs


def test_tokenize_split_shares_candidate_rows():
    c = gen_synthetic("ranking", CorpusSizes(train=5, test=5, candidates=3, num_keys=10, num_fillers=10), seed=0)
    vocab = c.vocab()
    recs = c.train[:2] + c.train[:1]
    split = tokenize_split(vocab, recs)
    assert len(split.c_ids) == 6
    np.testing.assert_array_equal(split.cand_rows[0], split.cand_rows[2])
    r = recs[1]
    row = split.positive_rows[1]
    assert vocab.decode(split.c_ids[row][split.c_mask[row]][1:]) == dict(r.candidates)[r.positives[0]]
    ids, mask = tokenize(vocab, ["k001", "k002 w003 w004"])
    assert ids.shape == (2, 4) and mask.sum() == 6
    with pytest.raises(CorpusError):
        tokenize(vocab, ["k001 w001 w002"], length=2)
    t_ids, t_mask = trim(np.pad(ids, ((0, 0), (0, 3))), np.pad(mask, ((0, 0), (0, 3))))
    assert t_ids.shape == (2, 4)


def test_batches_cover_and_drop_last():
    rng = np.random.default_rng(0)
    got = list(batches(10, 4, rng))
    assert [len(b) for b in got] == [4, 4]
    assert len(set(np.concatenate(got))) == 8
    assert [len(b) for b in batches(10, 4, rng, drop_last=False)] == [4, 4, 2]


# -- metrics --------------------------------------------------------------

def test_rank_ties_broken_by_candidate_id():
    assert rank_of_first_positive([0.5, 0.5, 0.5], [30, 10, 20], [20]) == 2
    assert rank_of_first_positive([0.5, 0.5, 0.5], [30, 10, 20], [30]) == 3
    assert rank_of_first_positive([0.1, 0.9, 0.5], [1, 2, 3], [1, 3]) == 2
    with pytest.raises(CorpusError):
        rank_of_first_positive([0.1, 0.2], [1, 2], [5])
    with pytest.raises(ValueError):
        rank_of_first_positive([np.nan, 0.2], [1, 2], [1])


def test_rank_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 12))
        scores = rng.integers(0, 4, n).astype(float)  # many ties
        cids = rng.permutation(100)[:n].tolist()
        pos = set(rng.choice(cids, int(rng.integers(1, 3)), replace=False).tolist())
        assert rank_of_first_positive(scores, cids, pos) == oracles.ranks(scores, cids, pos)


def test_oracle_and_reversed_scorers():
    c = gen_synthetic("ranking", SMALL, seed=4)
    assert evaluate(oracle_scorer, c.test) == {"mrr": 1.0, "r1@10": 1.0}
    got = evaluate(reversed_scorer, c.test)
    hand = []
    for r in c.test:
        s = [-1.0 if cid in r.positives else 0.0 for cid, _ in r.candidates]
        hand.append(1.0 / oracles.ranks(s, [cid for cid, _ in r.candidates], set(r.positives)))
    assert got["mrr"] == pytest.approx(float(np.mean(hand)), abs=1e-15)
    assert got["mrr"] == pytest.approx(0.1) and got["r1@10"] == 0.0


def test_random_scorer_chance_levels():
    c = gen_synthetic("ranking", CorpusSizes(train=0, test=5000), seed=5)
    got = evaluate(random_scorer(0), c.test)
    assert abs(got["r1@10"] - 0.1) <= 0.01
    # Monte-Carlo oracle for the expected reciprocal rank of a uniform rank in 1..10
    sim = np.random.default_rng(9).integers(1, 11, 200_000)
    expected = float(np.mean(1.0 / sim))
    assert expected == pytest.approx(0.2929, abs=2e-3)
    assert abs(got["mrr"] - expected) <= 0.02


def test_metric_determinism_and_errors():
    c = gen_synthetic("ranking", SMALL, seed=6)
    flat = lambda recs: [np.zeros(len(r.candidates)) for r in recs]
    assert evaluate(flat, c.test) == evaluate(flat, c.test)
    with pytest.raises(CorpusError):
        evaluate(oracle_scorer, [])
    with pytest.raises(ValueError):
        evaluate(oracle_scorer, c.test, ("ndcg",))
    assert mrr([1, 2, 4]) == pytest.approx((1 + 0.5 + 0.25) / 3)
    assert recall_at_1([1, 2, 1, 3]) == 0.5


def test_accuracy_metric():
    c = gen_synthetic("classification", SMALL, seed=7)
    assert evaluate(oracle_scorer, c.test, ("accuracy",)) == {"accuracy": 1.0}
    acc = evaluate(random_scorer(1), c.test, ("accuracy",))["accuracy"]
    assert 0.1 < acc < 0.6
