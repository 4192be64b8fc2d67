"""Small model configs and random token batches shared by the tests."""

from __future__ import annotations

import numpy as np

from mixencoder.encoder import CLS, SPECIAL_BASE
from mixencoder.models import ModelConfig, build_model

VOCAB = 40
FIRST_WORD = SPECIAL_BASE + 10  # kmax=10 special tokens precede ordinary words


def tiny_cfg(model: str = "mix-a", **overrides) -> ModelConfig:
    base = dict(vocab_size=VOCAB, d_model=16, num_heads=2, num_layers=2, max_len=32, ffn_dim=32, float_bits=64)
    base.update(overrides)
    return ModelConfig.preset(model, **base)


def tiny_model(model: str = "mix-a", **overrides):
    return build_model(tiny_cfg(model, **overrides))


def tokens(rng: np.random.Generator, rows: int, length: int, min_len: int | None = None):
    """[CLS]-led random id rows with trailing padding; lengths drawn in [min_len, length]."""
    min_len = length if min_len is None else min_len
    ids = np.zeros((rows, length), dtype=np.int64)
    mask = np.zeros((rows, length), dtype=bool)
    for r in range(rows):
        n = int(rng.integers(min_len, length + 1))
        ids[r, 0] = CLS
        ids[r, 1:n] = rng.integers(FIRST_WORD, VOCAB, n - 1)
        mask[r, :n] = True
    return ids, mask


def zero_(*tensors) -> None:
    for t in tensors:
        t.data[...] = 0.0
