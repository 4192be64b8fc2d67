"""Task heads, scoring functions and losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import FeedForward, Linear, Tensor, concat, cross_entropy, tabs
from .numcore.flops import flop_scope

HEAD = "head"


@dataclass(frozen=True)
class AblationFlags:
    """Scoring switches.

    ``use_H=False``: the per-candidate query states are not computed; the query
    side of the dot product is the mean of the final query token vectors.
    ``use_E=False``: the candidate side is a learned projection of the cached
    ``h0`` instead of the final context embeddings.
    ``eq6_only``: score is a linear map of the averaged final context embeddings.
    """

    use_H: bool = True
    use_E: bool = True
    eq6_only: bool = False

    def __post_init__(self):
        if self.eq6_only and not self.use_E:
            raise ValueError("eq6_only scoring needs the E pathway")
        if not (self.use_H or self.use_E):
            raise ValueError("at least one of use_H / use_E must be active")

    @property
    def needs_state(self) -> bool:
        return self.use_H and not self.eq6_only

    @property
    def name(self) -> str:
        if self.eq6_only:
            return "eq6"
        if not self.use_H:
            return "no_H"
        if not self.use_E:
            return "no_E"
        return "original"

    @classmethod
    def from_name(cls, name: str) -> "AblationFlags":
        table = {
            "original": cls(),
            "no_H": cls(use_H=False),
            "no_E": cls(use_E=False),
            "eq6": cls(eq6_only=True),
        }
        try:
            return table[name]
        except KeyError:
            raise ValueError(f"unknown ablation {name!r}; choose from {sorted(table)}") from None


def classify(h: Tensor, e: Tensor, ffn: FeedForward) -> Tensor:
    """Class logits from ``FFN([h; e; |h - e|])``."""
    if h.shape != e.shape:
        raise ValueError(f"classify: h {h.shape} vs e {e.shape}")
    with flop_scope(HEAD):
        return ffn(concat([h, e, tabs(h - e)], axis=-1))


def rank_score(h: Tensor, e: Tensor) -> Tensor:
    """Row-wise dot products of (..., N, d) inputs -> (..., N)."""
    if h.shape != e.shape:
        raise ValueError(f"rank_score: h {h.shape} vs e {e.shape}")
    *lead, d = h.shape
    with flop_scope(HEAD):
        out = h.reshape(*lead, 1, d) @ e.reshape(*lead, d, 1)
    return out.reshape(*lead)


def eq6_score(E: Tensor, lin: Linear) -> Tensor:
    """Linear map of the k-averaged context embeddings (..., N, k, d) -> (..., N)."""
    with flop_scope(HEAD):
        s = lin(E.mean(axis=-2))
    return s.reshape(*s.shape[:-1])


def in_batch_negative_loss(scores: Tensor) -> Tensor:
    """Mean cross-entropy of each row of a (B, B) score matrix against its diagonal."""
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise ValueError(f"in-batch scores must be square, got {scores.shape}")
    if scores.shape[0] < 2:
        raise ValueError("in-batch negatives need a batch of at least 2")
    return cross_entropy(scores, np.arange(scores.shape[0]))


def classification_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    return cross_entropy(logits, labels)
