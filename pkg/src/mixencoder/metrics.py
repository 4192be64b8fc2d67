"""Ranking and classification metrics with deterministic tie-breaking."""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import CorpusError, Record

METRICS = ("mrr", "r1", "accuracy")


def rank_of_first_positive(scores: np.ndarray, candidate_ids: Sequence[int], positives: Iterable[int]) -> int:
    """1-based rank of the best-ranked positive.

    Sorting is by score descending, ties broken by candidate id ascending.
    """
    scores = np.asarray(scores, dtype=np.float64)
    cids = np.asarray(candidate_ids)
    if scores.shape != cids.shape:
        raise ValueError(f"{scores.shape[0]} scores for {cids.shape[0]} candidates")
    if np.isnan(scores).any():
        raise ValueError("NaN score")
    order = np.lexsort((cids, -scores))
    hits = np.flatnonzero(np.isin(cids[order], list(positives)))
    if hits.size == 0:
        raise CorpusError("record has no positive among its candidates")
    return int(hits[0]) + 1


def mrr(ranks: Sequence[int]) -> float:
    return float(np.mean(1.0 / np.asarray(ranks, dtype=np.float64)))


def recall_at_1(ranks: Sequence[int]) -> float:
    return float(np.mean(np.asarray(ranks) == 1))


Scorer = Callable[[Sequence[Record]], list[np.ndarray]]


def evaluate(scorer: Scorer, records: Sequence[Record], metrics: Sequence[str] = ("mrr", "r1")) -> dict[str, float]:
    """Score every record and aggregate.

    ``scorer`` maps a list of records to one array per record: candidate scores
    for ranking records, class logits (or a predicted class) for labelled ones.
    """
    if not records:
        raise CorpusError("cannot evaluate an empty corpus")
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    outputs = scorer(records)
    if len(outputs) != len(records):
        raise ValueError(f"scorer returned {len(outputs)} outputs for {len(records)} records")
    result: dict[str, float] = {}
    if {"mrr", "r1"} & set(metrics):
        ranks = [rank_of_first_positive(s, [c for c, _ in r.candidates], r.positives)
                 for s, r in zip(outputs, records)]
        if "mrr" in metrics:
            result["mrr"] = mrr(ranks)
        if "r1" in metrics:
            result[f"r1@{len(records[0].candidates)}"] = recall_at_1(ranks)
    if "accuracy" in metrics:
        preds = [int(np.argmax(o)) if np.ndim(o) else int(o) for o in outputs]
        labels = [r.label for r in records]
        if any(lab is None for lab in labels):
            raise CorpusError("accuracy needs labelled records")
        result["accuracy"] = float(np.mean(np.array(preds) == np.array(labels)))
    return result


# -- reference scorers ----------------------------------------------------

def oracle_scorer(records: Sequence[Record]) -> list[np.ndarray]:
    """Perfect scores: 1 for positives, 0 otherwise; one-hot logits for labels."""
    out = []
    for r in records:
        if r.label is not None:
            out.append(np.eye(3)[r.label])
        else:
            pos = set(r.positives)
            out.append(np.array([1.0 if c in pos else 0.0 for c, _ in r.candidates]))
    return out


def random_scorer(seed: int = 0) -> Scorer:
    rng = np.random.default_rng(seed)

    def score(records: Sequence[Record]) -> list[np.ndarray]:
        return [rng.random(len(r.candidates)) if r.label is None else rng.random(3) for r in records]

    return score


def reversed_scorer(records: Sequence[Record]) -> list[np.ndarray]:
    """Positives get the lowest score."""
    return [-s for s in oracle_scorer(records)]
