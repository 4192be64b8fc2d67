"""Offline candidate encoding into k context embeddings, and the binary cache.

Cache file layout (little-endian)::

    magic     4s   b"MIXC"
    version   u32
    N         u64  number of entries
    k         u32  context embeddings per candidate
    d         u32  embedding width
    width     u8   float width in bytes (4 or 8)
    strategy  u8   ord("S") or ord("C")
    N times:
        candidate_id  u64
        E0            k*d floats, row-major
        h0            d floats

Entries are sorted by strictly increasing candidate id.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .encoder import Encoder, SPECIAL_BASE, TokenSequence, pad_batch
from .numcore import Linear, Module, RNG, Tensor, no_grad
from .numcore import functional as F
from .numcore.nn import INIT_STD, param

MAGIC = b"MIXC"
VERSION = 1
_HEADER = struct.Struct("<4sIQIIBB")
HEADER_SIZE = _HEADER.size


class CacheFormatError(ValueError):
    """Cache file is malformed: wrong magic, unsupported version, truncated, ..."""


class CacheLookupError(KeyError):
    pass


@dataclass(frozen=True)
class PrecomputeStrategy:
    kind: str = "S"
    k: int = 1
    kmax: int = 10

    def __post_init__(self):
        if self.kind not in ("S", "C"):
            raise ValueError(f"unknown strategy {self.kind!r}; expected 'S' or 'C'")
        if not 1 <= self.k <= self.kmax:
            raise ValueError(f"k={self.k} outside [1, {self.kmax}]")


class ContextCodes(Module):
    """k learned codes attending (single head) over the encoder's last-layer output."""

    def __init__(self, k: int, d: int, rng: RNG, dtype=np.float32):
        self.codes = param(rng.normal((k, d), INIT_STD, dtype))
        self.q_proj = Linear(d, d, rng, dtype)
        self.k_proj = Linear(d, d, rng, dtype)
        self.v_proj = Linear(d, d, rng, dtype)

    @property
    def k(self) -> int:
        return self.codes.shape[0]

    def __call__(self, y: Tensor, mask: np.ndarray | None) -> Tensor:
        if mask is not None and not np.asarray(mask).any(axis=-1).all():
            raise ValueError("C-strategy needs at least one real candidate token")
        return F.attention(self.q_proj(self.codes), self.k_proj(y), self.v_proj(y), 1, mask)


def with_special_tokens(ids: np.ndarray, mask: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Prepend S_1..S_k to every row of a (N, t) batch."""
    n = ids.shape[0]
    special = np.broadcast_to(np.arange(SPECIAL_BASE, SPECIAL_BASE + k, dtype=ids.dtype), (n, k))
    return (np.concatenate([special, ids], axis=1),
            np.concatenate([np.ones((n, k), dtype=bool), mask], axis=1))


def encode_candidates_S(encoder: Encoder, ids: np.ndarray, mask: np.ndarray, k: int) -> tuple[Tensor, Tensor]:
    """E0 = encoder outputs at the k prepended special positions; h0 = mean of E0 rows."""
    ids2, mask2 = with_special_tokens(ids, mask, k)
    y = encoder.encode(ids2, mask2)
    e0 = y[:, :k]
    return e0, e0.mean(axis=-2)


def encode_candidates_C(encoder: Encoder, codes: ContextCodes, ids: np.ndarray, mask: np.ndarray) -> tuple[Tensor, Tensor]:
    e0 = codes(encoder.encode(ids, mask), mask)
    return e0, e0.mean(axis=-2)


@dataclass
class CandidateCacheEntry:
    candidate_id: int
    E0: np.ndarray  # (k, d)
    h0: np.ndarray  # (d,)


def precompute_S(candidate: TokenSequence, k: int, encoder: Encoder, candidate_id: int = 0) -> CandidateCacheEntry:
    ids, mask = pad_batch([candidate])
    with no_grad():
        e0, h0 = encode_candidates_S(encoder, ids, mask, k)
    return CandidateCacheEntry(candidate_id, e0.data[0], h0.data[0])


def precompute_C(candidate: TokenSequence, codes: ContextCodes, encoder: Encoder, candidate_id: int = 0) -> CandidateCacheEntry:
    if not any(candidate.mask):
        raise ValueError("empty candidate")
    ids, mask = pad_batch([candidate])
    with no_grad():
        e0, h0 = encode_candidates_C(encoder, codes, ids, mask)
    return CandidateCacheEntry(candidate_id, e0.data[0], h0.data[0])


class CandidateCache:
    """Pre-computed (E0, h0) rows keyed by candidate id. Treated as read-only once built."""

    def __init__(self, ids: np.ndarray, E0: np.ndarray, h0: np.ndarray, strategy: str = "S"):
        ids = np.asarray(ids, dtype=np.uint64)
        if E0.ndim != 3 or h0.ndim != 2 or len(ids) != len(E0) or len(ids) != len(h0):
            raise ValueError(f"inconsistent cache arrays: ids {ids.shape}, E0 {E0.shape}, h0 {h0.shape}")
        if E0.shape[2] != h0.shape[1]:
            raise ValueError("E0 and h0 widths differ")
        if E0.dtype != h0.dtype or E0.dtype not in (np.float32, np.float64):
            raise ValueError(f"unsupported float type {E0.dtype}")
        if len(ids) > 1 and not (ids[1:] > ids[:-1]).all():
            raise ValueError("candidate ids must be strictly increasing")
        if not (np.isfinite(E0).all() and np.isfinite(h0).all()):
            raise ValueError("cache contains non-finite values")
        if strategy not in ("S", "C"):
            raise ValueError(f"unknown strategy {strategy!r}")
        self.ids = ids
        self.E0 = E0
        self.h0 = h0
        self.strategy = strategy
        self._row = {int(c): i for i, c in enumerate(ids)}

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def k(self) -> int:
        return self.E0.shape[1]

    @property
    def d(self) -> int:
        return self.E0.shape[2]

    @property
    def float_width(self) -> int:
        return self.E0.dtype.itemsize

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        return (isinstance(other, CandidateCache) and self.strategy == other.strategy
                and self.E0.dtype == other.E0.dtype
                and np.array_equal(self.ids, other.ids)
                and self.E0.tobytes() == other.E0.tobytes()
                and self.h0.tobytes() == other.h0.tobytes())

    def entry(self, candidate_id: int) -> CandidateCacheEntry:
        i = self._index([candidate_id])[0]
        return CandidateCacheEntry(int(self.ids[i]), self.E0[i], self.h0[i])

    def _index(self, ids: Iterable[int]) -> np.ndarray:
        try:
            return np.array([self._row[int(c)] for c in ids], dtype=np.int64)
        except KeyError as exc:
            raise CacheLookupError(f"candidate id {exc.args[0]} not in cache") from None

    def lookup(self, ids: Sequence[int]) -> tuple[Tensor, Tensor]:
        """(E0 rows (N, k, d), h0 rows (N, d)) for ``ids`` in the given order."""
        rows = self._index(ids)
        return Tensor(self.E0[rows]), Tensor(self.h0[rows])

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.ids, self.E0, self.h0):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def expected_file_size(self) -> int:
        return file_size(self.n, self.k, self.d, self.float_width)

    def save(self, path: str | Path) -> None:
        fdt = np.dtype(f"<f{self.float_width}")
        header = _HEADER.pack(MAGIC, VERSION, self.n, self.k, self.d, self.float_width, ord(self.strategy))
        # interleave per-entry records: id, E0 row block, h0
        rec = np.dtype([("id", "<u8"), ("E0", fdt, (self.k * self.d,)), ("h0", fdt, (self.d,))])
        body = np.empty(self.n, dtype=rec)
        body["id"] = self.ids
        body["E0"] = self.E0.reshape(self.n, -1)
        body["h0"] = self.h0
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(body.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "CandidateCache":
        raw = Path(path).read_bytes()
        if len(raw) < HEADER_SIZE:
            raise CacheFormatError(f"{path}: truncated header ({len(raw)} bytes)")
        magic, version, n, k, d, width, strategy = _HEADER.unpack_from(raw, 0)
        if magic != MAGIC:
            raise CacheFormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise CacheFormatError(f"{path}: unsupported version {version}")
        if width not in (4, 8):
            raise CacheFormatError(f"{path}: unsupported float width {width}")
        if chr(strategy) not in ("S", "C"):
            raise CacheFormatError(f"{path}: unknown strategy byte {strategy}")
        expected = file_size(n, k, d, width)
        if len(raw) != expected:
            raise CacheFormatError(f"{path}: size {len(raw)} bytes, header implies {expected}")
        fdt = np.dtype(f"<f{width}")
        rec = np.dtype([("id", "<u8"), ("E0", fdt, (k * d,)), ("h0", fdt, (d,))])
        body = np.frombuffer(raw, dtype=rec, count=n, offset=HEADER_SIZE)
        native = np.dtype(f"f{width}")
        try:
            return cls(body["id"].copy(), body["E0"].astype(native).reshape(n, k, d),
                       body["h0"].astype(native), chr(strategy))
        except ValueError as exc:
            raise CacheFormatError(f"{path}: {exc}") from None


def file_size(n: int, k: int, d: int, width: int = 4) -> int:
    return HEADER_SIZE + n * (8 + width * (k * d + d))


def build_cache(candidates: Sequence[tuple[int, TokenSequence]], model, batch_size: int = 256) -> CandidateCache:
    """Encode every candidate once with ``model.precompute`` and collect the rows by id.

    ``model`` is anything exposing ``precompute(ids, mask) -> (E0, h0)`` and a
    ``strategy`` attribute (a MixEncoder).
    """
    if not candidates:
        raise ValueError("no candidates to cache")
    ordered = sorted(candidates, key=lambda c: c[0])
    ids = [c for c, _ in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError("candidate ids must be unique")
    e_parts, h_parts = [], []
    with no_grad():
        for start in range(0, len(ordered), batch_size):
            chunk = [seq for _, seq in ordered[start:start + batch_size]]
            tok, mask = pad_batch(chunk)
            e0, h0 = model.precompute(tok, mask)
            e_parts.append(e0.data)
            h_parts.append(h0.data)
    return CandidateCache(np.array(ids, dtype=np.uint64), np.concatenate(e_parts), np.concatenate(h_parts),
                          model.strategy.kind)


def load_cache(path: str | Path) -> CandidateCache:
    return CandidateCache.load(path)


def lookup(cache: CandidateCache, ids: Sequence[int]) -> tuple[Tensor, Tensor]:
    return cache.lookup(ids)
