"""Latency benchmark and FLOP partitioning.

Timed work covers only the online computation: candidate representations are
built beforehand and cross-encoder pair arrays are assembled before the clock
starts, so tokenization and cache I/O are excluded.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .baselines import pair_arrays
from .encoder import CLS
from .numcore import flops
from .precompute import file_size

MIN_REPS = 5
MIN_WARMUPS = 2

QUERY_ENCODING = "query_encoding"
CANDIDATE_INTERACTION = "candidate_interaction"
HEAD = "head"


class BenchError(ValueError):
    pass


def partition(counts: Mapping[str, int]) -> dict[str, int]:
    """Fold scope labels into query-encoding / candidate-interaction / head totals."""
    out = {QUERY_ENCODING: 0, CANDIDATE_INTERACTION: 0, HEAD: 0}
    for label, n in counts.items():
        if label == "query":
            out[QUERY_ENCODING] += n
        elif label == "head":
            out[HEAD] += n
        else:  # interaction/*, candidate, pair
            out[CANDIDATE_INTERACTION] += n
    return out


def flop_count(run: Callable[[], object]) -> dict[str, int]:
    """Exact matmul FLOPs of ``run()``, partitioned, plus every raw scope label."""
    with flops.count_flops() as counter:
        run()
    out = partition(counter.counts)
    out["total"] = counter.total()
    out.update({f"scope:{k}": v for k, v in counter.as_dict().items()})
    return out


@dataclass
class BenchEntry:
    model: str
    n: int
    median_ms: float
    times_ms: list[float]
    flops: dict[str, int]
    cache_bytes: int
    speedup_vs_cross: float | None = None


@dataclass
class BenchReport:
    entries: list[BenchEntry] = field(default_factory=list)
    reps: int = MIN_REPS
    warmups: int = MIN_WARMUPS
    n_queries: int = 1
    setup: dict = field(default_factory=dict)

    def get(self, model: str, n: int) -> BenchEntry:
        for e in self.entries:
            if e.model == model and e.n == n:
                return e
        raise KeyError((model, n))

    def models(self) -> list[str]:
        return list(dict.fromkeys(e.model for e in self.entries))

    def ns(self) -> list[int]:
        return sorted({e.n for e in self.entries})

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def table(self) -> str:
        head = f"{'model':<8} {'N':>6} {'median ms':>11} {'speedup':>9} {'GFLOP':>9} {'cache bytes':>12}"
        lines = [head, "-" * len(head)]
        for e in self.entries:
            sp = f"{e.speedup_vs_cross:.1f}x" if e.speedup_vs_cross is not None else "-"
            lines.append(f"{e.model:<8} {e.n:>6} {e.median_ms:>11.2f} {sp:>9} "
                         f"{e.flops['total'] / 1e9:>9.3f} {e.cache_bytes:>12}")
        return "\n".join(lines)


def _random_tokens(rng: np.random.Generator, rows: int, length: int, vocab_size: int, first_word: int):
    ids = rng.integers(first_word, vocab_size, size=(rows, length))
    ids[:, 0] = CLS
    return ids, np.ones((rows, length), dtype=bool)


def _reps_bytes(model, reps, n: int) -> int:
    if getattr(model, "kind", "") == "mix":
        e0 = reps[0]
        return file_size(n, e0.shape[1], e0.shape[2], e0.dtype.itemsize)
    if getattr(model, "kind", "") == "cross":
        return 0
    arrays = reps if isinstance(reps, tuple) else (reps,)
    return int(sum(a.nbytes for a in arrays))


def _timed(fn: Callable[[], object], reps: int, warmups: int) -> list[float]:
    for _ in range(warmups):
        fn()
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append((time.perf_counter() - t0) * 1e3)
    return out


def online_fn(model, q_ids, q_mask, c_ids, c_mask):
    """Callable performing only the online work for one batch of queries."""
    reps = model.prepare_candidates(c_ids, c_mask)
    if getattr(model, "kind", "") == "cross":
        pairs = [pair_arrays(q_ids[i : i + 1], q_mask[i : i + 1], c_ids, c_mask) for i in range(len(q_ids))]

        def run():
            return [model.score_pair_arrays(ids, mask) for ids, mask in pairs]

        return run, reps

    def run():
        return [model.score_prepared(q_ids[i : i + 1], q_mask[i : i + 1], reps) for i in range(len(q_ids))]

    return run, reps


def bench_latency(models: Mapping[str, object], n_list: Sequence[int], reps: int = MIN_REPS,
                  warmups: int = MIN_WARMUPS, q_len: int = 32, t_len: int = 32, n_queries: int = 1,
                  seed: int = 0, first_word: int = 13) -> BenchReport:
    """Median wall time of scoring ``n_queries`` queries against N candidates, per model and N."""
    if reps < MIN_REPS:
        raise BenchError(f"need at least {MIN_REPS} timed runs, got {reps}")
    if warmups < MIN_WARMUPS:
        raise BenchError(f"need at least {MIN_WARMUPS} warmup runs, got {warmups}")
    if not n_list or min(n_list) < 1:
        raise BenchError("candidate counts must be positive")
    rng = np.random.default_rng(seed)
    report = BenchReport(reps=reps, warmups=warmups, n_queries=n_queries,
                         setup={"q_len": q_len, "t_len": t_len, "seed": seed})
    for n in n_list:
        vocab_size = min(m.cfg.vocab_size for m in models.values())
        q_ids, q_mask = _random_tokens(rng, n_queries, q_len, vocab_size, first_word)
        c_ids, c_mask = _random_tokens(rng, n, t_len, vocab_size, first_word)
        for name, model in models.items():
            run, cached = online_fn(model, q_ids, q_mask, c_ids, c_mask)
            times = _timed(run, reps, warmups)
            report.entries.append(BenchEntry(name, n, statistics.median(times), times, flop_count(run),
                                             _reps_bytes(model, cached, n)))
    cross = [m for m, model in models.items() if getattr(model, "kind", "") == "cross"]
    if cross:
        for e in report.entries:
            e.speedup_vs_cross = report.get(cross[0], e.n).median_ms / e.median_ms
    return report
