"""Training loop, model-backed scorers and the JSONL metrics log."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, Record, TokenizedSplit, batches, tokenize_split, trim
from .encoder import Vocab
from .heads import classification_loss, in_batch_negative_loss
from .metrics import evaluate
from .numcore import Adam, warmup_linear


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int | None = None  # None: 64 for ranking, 16 for classification and cross-encoders
    lr: float = 3e-4
    warmup_frac: float = 0.05
    weight_decay: float = 0.0
    seed: int = 0
    eval_every: int = 1  # epochs; 0 disables per-epoch evaluation
    max_steps: int | None = None
    target: dict | None = None  # stop early once every listed metric reaches its value

    def resolved_batch(self, task: str, model_kind: str = "") -> int:
        if self.batch_size is not None:
            return self.batch_size
        # a cross-encoder scores every in-batch pair jointly: B^2 encodings per step
        return 16 if task == "classification" or model_kind == "cross" else 64


class MetricsLog:
    """Line-delimited JSON records: ``{"step", "epoch", "loss"}`` or ``{"step", "metric", "value"}``."""

    def __init__(self, path: str | Path | None = None):
        self.records: list[dict] = []
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, **rec) -> None:
        self.records.append(rec)
        if self._fh:
            self._fh.write(json.dumps(rec) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    def losses(self) -> list[float]:
        return [r["loss"] for r in self.records if "loss" in r]


# -- scoring with a model -------------------------------------------------

class ModelScorer:
    """Adapts a model to the ``evaluate`` scorer protocol.

    Candidate representations are computed once per split, then each query is
    scored against its own candidates.
    """

    def __init__(self, model, vocab: Vocab, chunk: int = 256):
        self.model = model
        self.vocab = vocab
        self.chunk = chunk

    def prepare(self, split: TokenizedSplit):
        parts = []
        for s in range(0, len(split.c_ids), self.chunk):
            ids, mask = trim(split.c_ids[s : s + self.chunk], split.c_mask[s : s + self.chunk])
            parts.append(_pad_reps(self.model.prepare_candidates(ids, mask), split.c_ids.shape[1]))
        return _concat_reps(parts)

    def __call__(self, records: Sequence[Record]) -> list[np.ndarray]:
        split = tokenize_split(self.vocab, records)
        if records[0].label is not None:
            return list(self.logits(split))
        reps = self.prepare(split)
        out = []
        for i in range(len(split)):
            qi, qm = trim(split.q_ids[i : i + 1], split.q_mask[i : i + 1])
            out.append(self.model.score_prepared(qi, qm, take_reps(reps, split.cand_rows[i]))[0])
        return out

    def logits(self, split: TokenizedSplit) -> np.ndarray:
        from .numcore import no_grad

        rows = np.array([r[0] for r in split.cand_rows])
        out = []
        with no_grad():
            for s in range(0, len(split), self.chunk):
                sl = slice(s, s + self.chunk)
                qi, qm = trim(split.q_ids[sl], split.q_mask[sl])
                ci, cm = trim(split.c_ids[rows[sl]], split.c_mask[rows[sl]])
                out.append(self.model.pair_logits(qi, qm, ci, cm).data)
        return np.concatenate(out)


def take_reps(reps, rows: np.ndarray):
    """Index every array of a (possibly tuple) candidate representation by ``rows``."""
    if isinstance(reps, tuple):
        return tuple(r[rows] for r in reps)
    return reps[rows]


def _pad_reps(reps, width: int):
    # token-level reps (MaxSim, cross) carry a sequence axis that trim() shortened
    if not isinstance(reps, tuple):
        return reps
    first, mask = reps
    if mask.dtype != bool or mask.ndim != 2 or mask.shape[1] == width:
        return reps
    pad = width - mask.shape[1]
    first = np.pad(first, [(0, 0), (0, pad)] + [(0, 0)] * (first.ndim - 2))
    return first, np.pad(mask, [(0, 0), (0, pad)])


def _concat_reps(parts):
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


# -- training -------------------------------------------------------------

def _loss(model, task: str, split: TokenizedSplit, idx: np.ndarray):
    qi, qm = trim(split.q_ids[idx], split.q_mask[idx])
    rows = split.positive_rows[idx] if task != "classification" else np.array([split.cand_rows[i][0] for i in idx])
    ci, cm = trim(split.c_ids[rows], split.c_mask[rows])
    if task == "classification":
        return classification_loss(model.pair_logits(qi, qm, ci, cm), split.labels[idx])
    return in_batch_negative_loss(model.batch_scores(qi, qm, ci, cm))


def train(model, corpus: Corpus, cfg: TrainConfig, log: MetricsLog | None = None, vocab: Vocab | None = None,
          eval_records: Sequence[Record] | None = None) -> dict:
    """Adam with linear warmup then linear decay; in-batch negatives for ranking.

    Deterministic for a fixed ``cfg.seed``. Returns the final evaluation metrics.
    """
    log = log or MetricsLog()
    vocab = vocab or corpus.vocab(model.cfg.kmax)
    task = "classification" if corpus.task == "classification" else "ranking"
    split = tokenize_split(vocab, corpus.train)
    bsz = cfg.resolved_batch(task, getattr(model, "kind", ""))
    if len(split) < bsz:
        raise ValueError(f"{len(split)} training queries, fewer than one batch of {bsz}")
    steps_per_epoch = len(split) // bsz
    total = steps_per_epoch * cfg.epochs
    if cfg.max_steps is not None:
        total = min(total, cfg.max_steps)
    opt = Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    eval_records = eval_records if eval_records is not None else corpus.test
    metrics_names = ("accuracy",) if task == "classification" else ("mrr", "r1")
    scorer = ModelScorer(model, vocab)
    step, result = 0, {}
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        for idx in batches(len(split), bsz, rng):
            if step >= total:
                break
            opt.zero_grad()
            loss = _loss(model, task, split, idx)
            value = float(loss.data)
            if not math.isfinite(value):
                log.write(step=step, epoch=epoch, loss=value, error="non-finite loss")
                raise TrainingDiverged(f"loss became {value} at step {step} (epoch {epoch}); "
                                       f"lower the learning rate (now {cfg.lr}) or check the inputs")
            loss.backward()
            opt.step(warmup_linear(step, total, cfg.warmup_frac))
            log.write(step=step, epoch=epoch, loss=value)
            step += 1
        if cfg.eval_every and epoch % cfg.eval_every == 0 and eval_records:
            result = evaluate(scorer, eval_records, metrics_names)
            for name, value in result.items():
                log.write(step=step, epoch=epoch, metric=name, value=value, seconds=round(time.perf_counter() - t0, 2))
            if cfg.target and all(result.get(k, -1.0) >= v for k, v in cfg.target.items()):
                break
        if step >= total:
            break
    if not result and eval_records:
        result = evaluate(scorer, eval_records, metrics_names)
        for name, value in result.items():
            log.write(step=step, metric=name, value=value)
    return result


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
