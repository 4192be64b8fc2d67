"""Seeded, splittable random streams (Philox counter-based generator)."""

from __future__ import annotations

import zlib

import numpy as np

ALGORITHM = "philox4x64"


class RNG:
    """A deterministic sample stream.

    Identical seed and identical call sequence give a bit-identical stream.
    :meth:`child` derives an independent stream from a name, so adding a new
    consumer never shifts the samples seen by existing ones.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self._key = _key
        ss = np.random.SeedSequence([self.seed, *_key])
        self._gen = np.random.Generator(np.random.Philox(ss))

    @property
    def algorithm(self) -> str:
        return ALGORITHM

    def child(self, name: str) -> "RNG":
        return RNG(self.seed, self._key + (zlib.crc32(name.encode("utf-8")),))

    def normal(self, shape, std: float = 1.0, dtype=np.float32) -> np.ndarray:
        return (self._gen.standard_normal(shape) * std).astype(dtype)

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def integers(self, low: int, high: int | None = None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace: bool = True):
        return self._gen.choice(a, size=size, replace=replace)
