"""Token embedding and pre-norm transformer layers."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numcore import FeedForward, LayerNorm, Linear, Module, RNG, Tensor, embedding
from .numcore import functional as F
from .numcore.nn import INIT_STD, param

PAD, CLS, SEP = 0, 1, 2
SPECIAL_BASE = 3  # ids of S_1..S_kmax start here


class VocabError(ValueError):
    pass


class SequenceTooLong(ValueError):
    pass


class Vocab:
    """Whitespace vocabulary with reserved ids: PAD=0, CLS=1, SEP=2, S_1..S_kmax=3.."""

    def __init__(self, words: Sequence[str], kmax: int = 10):
        if kmax < 1:
            raise VocabError("kmax must be >= 1")
        self.kmax = kmax
        self.tokens = ["[PAD]", "[CLS]", "[SEP]"] + [f"[S{i}]" for i in range(1, kmax + 1)] + list(words)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise VocabError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    @staticmethod
    def special_id(i: int) -> int:
        """Id of special token S_i (1-based)."""
        return SPECIAL_BASE + i - 1

    def encode_words(self, text: str) -> list[int]:
        try:
            return [self.index[w] for w in text.split()]
        except KeyError as exc:
            raise VocabError(f"unknown token {exc.args[0]!r}") from None

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self.tokens[i] for i in ids)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, tok in enumerate(self.tokens):
                fh.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        tokens: list[str] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh):
                tok, idx = line.rstrip("\n").split("\t")
                if int(idx) != lineno:
                    raise VocabError(f"{path}:{lineno + 1}: ids must be dense, got {idx}")
                tokens.append(tok)
        kmax = sum(1 for t in tokens if t.startswith("[S") and t[2:-1].isdigit())
        vocab = cls(tokens[SPECIAL_BASE + kmax:], kmax)
        if vocab.tokens != tokens:
            raise VocabError(f"{path}: reserved tokens are not in the expected layout")
        return vocab


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.mask):
            raise ValueError("ids and mask lengths differ")
        seen_pad = False
        for m in self.mask:
            if not m:
                seen_pad = True
            elif seen_pad:
                raise ValueError("padding before a real token")

    @classmethod
    def of(cls, ids: Iterable[int]) -> "TokenSequence":
        ids = tuple(int(i) for i in ids)
        return cls(ids, (True,) * len(ids))

    def __len__(self) -> int:
        return len(self.ids)

    def prepend(self, ids: Sequence[int]) -> "TokenSequence":
        return TokenSequence(tuple(ids) + self.ids, (True,) * len(ids) + self.mask)


def text_sequence(vocab: Vocab, text: str) -> TokenSequence:
    """``[CLS] w1 w2 ...``"""
    return TokenSequence.of([CLS, *vocab.encode_words(text)])


def pair_sequence(query: TokenSequence, candidate: TokenSequence) -> TokenSequence:
    """``[CLS] q [SEP] c [SEP]`` from two ``[CLS]``-led sequences."""
    q = [i for i, m in zip(query.ids, query.mask) if m]
    c = [i for i, m in zip(candidate.ids, candidate.mask) if m]
    if q and q[0] == CLS:
        q = q[1:]
    if c and c[0] == CLS:
        c = c[1:]
    return TokenSequence.of([CLS, *q, SEP, *c, SEP])


def pad_batch(seqs: Sequence[TokenSequence], length: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stack sequences into (B, L) id and mask arrays, padding with PAD."""
    if not seqs:
        raise ValueError("empty batch")
    longest = max(len(s) for s in seqs)
    length = longest if length is None else length
    if length < longest:
        raise SequenceTooLong(f"sequence of length {longest} does not fit in {length}")
    ids = np.full((len(seqs), length), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), length), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s.ids
        mask[i, : len(s)] = s.mask
    return ids, mask


class TransformerLayer(Module):
    """Pre-norm block: ``x + Att(LN(x))`` then ``+ FFN(LN(.))``."""

    def __init__(self, d: int, heads: int, ffn_dim: int, rng: RNG, dtype=np.float32):
        self.heads = heads
        self.ln1 = LayerNorm(d, dtype)
        self.qkv = Linear(d, 3 * d, rng, dtype)
        self.attn_out = Linear(d, d, rng, dtype)
        self.ln2 = LayerNorm(d, dtype)
        self.ffn = FeedForward(d, ffn_dim, rng, dtype)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        d = x.shape[-1]
        qkv = self.qkv(self.ln1(x))
        q, k, v = qkv[..., :d], qkv[..., d : 2 * d], qkv[..., 2 * d :]
        x = x + F.attention(q, k, v, self.heads, mask, self.attn_out.weight, self.attn_out.bias)
        return x + self.ffn(self.ln2(x))


class Encoder(Module):
    """Token + learned positional embeddings followed by ``num_layers`` transformer layers."""

    def __init__(self, vocab_size: int, d: int, heads: int, num_layers: int, max_len: int,
                 ffn_dim: int, rng: RNG, dtype=np.float32):
        self.vocab_size = vocab_size
        self.d = d
        self.heads = heads
        self.max_len = max_len
        self.tok_emb = param(rng.normal((vocab_size, d), INIT_STD, dtype))
        self.pos_emb = param(rng.normal((max_len, d), INIT_STD, dtype))
        self.layers = [TransformerLayer(d, heads, ffn_dim, rng.child(f"layer{i}"), dtype) for i in range(num_layers)]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def embed(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        m = ids.shape[-1]
        if m > self.max_len:
            raise SequenceTooLong(f"length {m} exceeds max_len {self.max_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise VocabError(f"token id out of range [0, {self.vocab_size})")
        return embedding(self.tok_emb, ids) + self.pos_emb[:m]

    def encode(self, ids: np.ndarray, mask: np.ndarray | None = None, upto: int | None = None) -> Tensor:
        """Embed then apply layers ``1..upto`` (all layers by default)."""
        x = self.embed(ids)
        for layer in self.layers[: self.num_layers if upto is None else upto]:
            x = layer(x, mask)
        return x


# Sequence-level entry points ----------------------------------------------

def embed(seq: TokenSequence, encoder: Encoder) -> Tensor:
    return encoder.embed(np.asarray(seq.ids))


def transformer_layer(x: Tensor, mask, layer: TransformerLayer) -> Tensor:
    return layer(x, None if mask is None else np.asarray(mask, dtype=bool))


def encode(seq: TokenSequence, encoder: Encoder, upto: int | None = None) -> Tensor:
    return encoder.encode(np.asarray(seq.ids), np.asarray(seq.mask, dtype=bool), upto)
