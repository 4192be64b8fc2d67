"""Synthetic corpora, their JSONL files and conversion to token arrays.

Three generators share one vocabulary layout: a block of *key* tokens that
carry the relevance signal and a block of *filler* tokens that carry none.

``ranking``
    Each query holds one key; its positive candidate holds the same key, the
    negatives hold other keys.
``token_overlap``
    Keys are rare: a query holds two of them drawn from a large pool and the
    positive repeats exactly one. Negatives are built from the same filler
    distribution and the same number of rare tokens, so only exact
    co-occurrence separates them.
``classification``
    Keys come in partner pairs. Label 0 if the candidate holds the query's
    key, 1 if it holds the key's partner, 2 otherwise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .encoder import CLS, PAD, Vocab

TASKS = ("ranking", "classification", "token_overlap")
ENTAIL, CONTRADICT, NEUTRAL = 0, 1, 2


class CorpusError(ValueError):
    pass


@dataclass
class Record:
    query_id: int
    query: str
    candidates: list[tuple[int, str]]
    positives: list[int] = field(default_factory=list)
    label: int | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d["candidates"] = [[cid, text] for cid, text in self.candidates]
        if self.label is None:
            del d["label"]
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "Record":
        d = json.loads(line)
        return cls(int(d["query_id"]), d["query"], [(int(c), t) for c, t in d["candidates"]],
                   [int(p) for p in d.get("positives", [])], d.get("label"))


@dataclass(frozen=True)
class CorpusSizes:
    train: int = 5000
    test: int = 500
    candidates: int = 10
    num_keys: int = 200
    num_fillers: int = 400
    query_len: tuple[int, int] = (4, 10)
    candidate_len: tuple[int, int] = (6, 12)

    def validate(self, task: str, vocab_capacity: int) -> None:
        if self.train < 0 or self.test < 0 or self.train + self.test == 0:
            raise CorpusError("need at least one query")
        if self.num_keys + self.num_fillers > vocab_capacity:
            raise CorpusError(f"{self.num_keys} keys + {self.num_fillers} fillers exceed the "
                              f"vocabulary capacity of {vocab_capacity} words")
        if self.num_fillers < 1:
            raise CorpusError("need at least one filler token")
        lo, hi = self.query_len
        clo, chi = self.candidate_len
        if not (2 <= lo <= hi and 2 <= clo <= chi):
            raise CorpusError("lengths must be >= 2 and ordered (lo, hi)")
        if task == "classification":
            if self.num_keys < 4 or self.num_keys % 2:
                raise CorpusError("classification needs an even number (>= 4) of keys")
        elif self.candidates < 2:
            raise CorpusError("ranking needs at least 2 candidates per query")
        elif task == "ranking" and self.num_keys < self.candidates:
            raise CorpusError(f"{self.num_keys} keys cannot give {self.candidates} distinct candidates")
        elif task == "token_overlap" and self.num_keys < 2 * self.candidates + 2:
            raise CorpusError(f"token_overlap needs >= {2 * self.candidates + 2} rare tokens")


@dataclass
class Corpus:
    task: str
    words: list[str]
    train: list[Record]
    test: list[Record]

    def vocab(self, kmax: int = 10) -> Vocab:
        return Vocab(self.words, kmax)

    def save(self, directory: str | Path, kmax: int = 10) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        save_records(out / "train.jsonl", self.train)
        save_records(out / "test.jsonl", self.test)
        self.vocab(kmax).save(out / "vocab.tsv")
        (out / "meta.json").write_text(json.dumps({"task": self.task}) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "Corpus":
        src = Path(directory)
        try:
            task = json.loads((src / "meta.json").read_text())["task"]
            vocab = Vocab.load(src / "vocab.tsv")
        except FileNotFoundError as exc:
            raise CorpusError(f"{src}: not a corpus directory ({exc.filename} missing)") from None
        words = vocab.tokens[3 + vocab.kmax:]
        return cls(task, words, load_records(src / "train.jsonl"), load_records(src / "test.jsonl"))


def save_records(path: str | Path, records: Sequence[Record]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def load_records(path: str | Path) -> list[Record]:
    with open(path, encoding="utf-8") as fh:
        return [Record.from_json(line) for line in fh if line.strip()]


# -- generation -----------------------------------------------------------

def _vocab_words(sizes: CorpusSizes) -> tuple[list[str], list[str]]:
    keys = [f"k{i:03d}" for i in range(sizes.num_keys)]
    fillers = [f"w{i:03d}" for i in range(sizes.num_fillers)]
    return keys, fillers


class _Gen:
    def __init__(self, sizes: CorpusSizes, seed: int):
        self.s = sizes
        self.rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        self.keys, self.fillers = _vocab_words(sizes)

    def text(self, length_range: tuple[int, int], keys: Sequence[str]) -> str:
        lo, hi = length_range
        n = int(self.rng.integers(lo, hi + 1))
        words = [self.fillers[i] for i in self.rng.integers(0, len(self.fillers), max(n - len(keys), 0))]
        for k in keys:
            words.insert(int(self.rng.integers(0, len(words) + 1)), k)
        return " ".join(words)

    def ranking(self, qid: int) -> Record:
        n = self.s.candidates
        picks = self.rng.choice(len(self.keys), n, replace=False)
        key = self.keys[picks[0]]
        texts = [self.text(self.s.candidate_len, [key])]
        texts += [self.text(self.s.candidate_len, [self.keys[j]]) for j in picks[1:]]
        return self._ranked(qid, self.text(self.s.query_len, [key]), texts)

    def token_overlap(self, qid: int) -> Record:
        n = self.s.candidates
        picks = self.rng.choice(len(self.keys), 2 * n + 2, replace=False)
        q_keys = [self.keys[picks[0]], self.keys[picks[1]]]
        shared = q_keys[int(self.rng.integers(0, 2))]
        others = [self.keys[j] for j in picks[2:]]
        texts = [self.text(self.s.candidate_len, [shared, others[0]])]
        texts += [self.text(self.s.candidate_len, others[2 * i : 2 * i + 2]) for i in range(1, n)]
        return self._ranked(qid, self.text(self.s.query_len, q_keys), texts)

    def _ranked(self, qid: int, query: str, texts: list[str]) -> Record:
        # the positive (texts[0]) is placed at a random slot
        order = self.rng.permutation(len(texts))
        base = qid * len(texts)
        cands = [(base + slot, texts[src]) for slot, src in enumerate(order)]
        pos = base + int(np.flatnonzero(order == 0)[0])
        return Record(qid, query, cands, [pos])

    def classification(self, qid: int) -> Record:
        ki = int(self.rng.integers(0, len(self.keys)))
        partner = ki ^ 1
        label = int(self.rng.integers(0, 3))
        if label == ENTAIL:
            cand_key = ki
        elif label == CONTRADICT:
            cand_key = partner
        else:
            cand_key = int(self.rng.choice([j for j in range(len(self.keys)) if j not in (ki, partner)]))
        query = self.text(self.s.query_len, [self.keys[ki]])
        return Record(qid, query, [(qid, self.text(self.s.candidate_len, [self.keys[cand_key]]))], [], label)


def gen_synthetic(task: str, sizes: CorpusSizes | None = None, seed: int = 0, vocab_capacity: int = 987) -> Corpus:
    """Reproducible synthetic corpus; the same (task, sizes, seed) gives identical records."""
    if task not in TASKS:
        raise CorpusError(f"unknown task {task!r}; choose from {TASKS}")
    sizes = sizes or CorpusSizes()
    sizes.validate(task, vocab_capacity)
    gen = _Gen(sizes, seed)
    make = getattr(gen, task)
    records = [make(i) for i in range(sizes.train + sizes.test)]
    return Corpus(task, gen.keys + gen.fillers, records[: sizes.train], records[sizes.train :])


def label_rule(query: str, candidate: str) -> int:
    """The classification labelling rule applied to raw texts (keys pair up as 2i, 2i+1)."""
    qk = [int(w[1:]) for w in query.split() if w.startswith("k")]
    ck = {int(w[1:]) for w in candidate.split() if w.startswith("k")}
    if len(qk) != 1:
        raise CorpusError(f"query must hold exactly one key: {query!r}")
    if qk[0] in ck:
        return ENTAIL
    if qk[0] ^ 1 in ck:
        return CONTRADICT
    return NEUTRAL


# -- token arrays ---------------------------------------------------------

def tokenize(vocab: Vocab, texts: Sequence[str], length: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``[CLS] w1 .. wn`` rows padded to a common length -> (ids, mask)."""
    rows = [[CLS] + vocab.encode_words(t) for t in texts]
    width = length if length is not None else max(len(r) for r in rows)
    if any(len(r) > width for r in rows):
        raise CorpusError(f"a text is longer than the requested length {width}")
    ids = np.full((len(rows), width), PAD, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        mask[i, : len(r)] = True
    return ids, mask


@dataclass
class TokenizedSplit:
    """Every query and candidate of a split as padded arrays.

    ``cand_rows[i]`` indexes record i's candidates (in record order) into the
    candidate arrays, so candidate representations can be computed once.
    """

    q_ids: np.ndarray
    q_mask: np.ndarray
    c_ids: np.ndarray
    c_mask: np.ndarray
    cand_ids: np.ndarray  # (total,) candidate ids
    cand_rows: list[np.ndarray]
    positive_rows: np.ndarray  # (Q,) row of the first positive, or -1
    labels: np.ndarray  # (Q,) or empty

    def __len__(self) -> int:
        return len(self.q_ids)


def tokenize_split(vocab: Vocab, records: Sequence[Record]) -> TokenizedSplit:
    if not records:
        raise CorpusError("empty split")
    q_ids, q_mask = tokenize(vocab, [r.query for r in records])
    row_of: dict[int, int] = {}
    texts: list[str] = []
    cand_rows, pos_rows = [], []
    for r in records:
        rows = []
        for cid, text in r.candidates:
            if cid not in row_of:
                row_of[cid] = len(texts)
                texts.append(text)
            rows.append(row_of[cid])
        cand_rows.append(np.array(rows, dtype=np.int64))
        pos_rows.append(row_of[r.positives[0]] if r.positives else -1)
    c_ids, c_mask = tokenize(vocab, texts)
    cand_ids = np.array(sorted(row_of, key=row_of.get), dtype=np.int64)
    labels = np.array([r.label for r in records], dtype=np.int64) if records[0].label is not None else np.empty(0, np.int64)
    return TokenizedSplit(q_ids, q_mask, c_ids, c_mask, cand_ids, cand_rows, np.array(pos_rows), labels)


def batches(n: int, size: int, rng: np.random.Generator, shuffle: bool = True, drop_last: bool = True) -> Iterator[np.ndarray]:
    order = rng.permutation(n) if shuffle else np.arange(n)
    stop = n - n % size if drop_last and n >= size else n
    for s in range(0, stop, size):
        yield order[s : s + size]


def trim(ids: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop padding columns that are empty in every row."""
    width = int(mask.sum(axis=1).max())
    return ids[:, :width], mask[:, :width]
