"""Baseline scorers: dual-encoder, cross-encoder, poly-attention and MaxSim.

Each model exposes the same interface as :class:`~mixencoder.models.MixEncoder`:
``batch_scores`` / ``pair_logits`` for training and ``prepare_candidates`` /
``score_prepared`` for cached inference.
"""

from __future__ import annotations

import numpy as np

from .encoder import CLS, PAD, SEP, Encoder
from .heads import classify
from .numcore import FeedForward, Linear, Module, RNG, Tensor, l2_normalize, masked_mean, no_grad, softmax_rows, tmax
from .numcore import functional as F
from .numcore.flops import flop_scope
from .numcore.nn import INIT_STD, param

QUERY = "query"
CANDIDATE = "candidate"
PAIR = "pair"
HEAD = "head"
NEG_FILL = -1e4


# -- scoring functions -----------------------------------------------------

def baseline_dual_score(query_vec: Tensor, candidate_vec: Tensor) -> Tensor:
    """Dot product of pooled vectors; broadcasts (..., d) x (..., d) -> (...)."""
    return (query_vec * candidate_vec).sum(axis=-1)


def baseline_poly_score(query_ctx: Tensor, candidate_vec: Tensor) -> Tensor:
    """Attend the candidate over the c query context vectors, then dot with the result.

    ``query_ctx`` is (c, d) and ``candidate_vec`` is (d,), or batched (..., c, d)
    against (..., N, d) giving (..., N).
    """
    single = candidate_vec.ndim == 1
    cand = candidate_vec.reshape(1, -1) if single else candidate_vec
    w = softmax_rows(cand @ query_ctx.swapaxes(-1, -2))  # (..., N, c)
    attended = w @ query_ctx  # (..., N, d)
    out = (attended * cand).sum(axis=-1)
    return out.reshape(()) if single else out


def baseline_maxsim_score(query_tok: Tensor, cand_tok: Tensor,
                          query_mask: np.ndarray | None = None, cand_mask: np.ndarray | None = None) -> Tensor:
    """Sum over query tokens of the max cosine similarity to any candidate token.

    Unbatched: (m, d) and (t, d) -> scalar. Batched: (Bq, m, d) against
    (Bc, t, d) -> (Bq, Bc), with optional padding masks.
    """
    qn, cn = l2_normalize(query_tok), l2_normalize(cand_tok)
    if query_tok.ndim == 2:
        sim = qn @ cn.swapaxes(-1, -2)  # (m, t)
        if cand_mask is not None:
            sim = sim + np.where(np.asarray(cand_mask, bool), 0.0, NEG_FILL).astype(sim.dtype)
        best = tmax(sim, axis=-1)
        if query_mask is not None:
            best = best * np.asarray(query_mask, dtype=best.dtype)
        return best.sum()
    bq, m, d = qn.shape
    bc, t, _ = cn.shape
    sim = qn.reshape(bq, 1, m, d) @ cn.reshape(1, bc, t, d).swapaxes(-1, -2)  # (Bq, Bc, m, t)
    if cand_mask is not None:
        sim = sim + np.where(np.asarray(cand_mask, bool), 0.0, NEG_FILL).astype(sim.dtype)[None, :, None, :]
    best = tmax(sim, axis=-1)  # (Bq, Bc, m)
    if query_mask is not None:
        best = best * np.asarray(query_mask, dtype=best.dtype)[:, None, :]
    return best.sum(axis=-1)


def baseline_cross_score(pair_ids: np.ndarray, pair_mask: np.ndarray, encoder: Encoder, head: Linear) -> Tensor:
    """Joint encoding of ``[CLS] q [SEP] c [SEP]`` rows; linear head on the CLS output."""
    y = encoder.encode(pair_ids, pair_mask)
    with flop_scope(HEAD):
        out = head(y[..., 0, :])
    return out


def pair_arrays(q_ids: np.ndarray, q_mask: np.ndarray, c_ids: np.ndarray, c_mask: np.ndarray,
                all_pairs: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Token arrays for ``[CLS] q [SEP] c [SEP]``.

    Inputs are ``[CLS]``-led padded batches. With ``all_pairs`` the result has
    Bq*Bc rows in query-major order; otherwise query i is paired with candidate i.
    """
    qs = [row[m][1:] if row[m][:1].tolist() == [CLS] else row[m] for row, m in zip(q_ids, q_mask.astype(bool))]
    cs = [row[m][1:] if row[m][:1].tolist() == [CLS] else row[m] for row, m in zip(c_ids, c_mask.astype(bool))]
    if all_pairs:
        pairs = [(q, c) for q in qs for c in cs]
    else:
        if len(qs) != len(cs):
            raise ValueError("aligned pairs need equally many queries and candidates")
        pairs = list(zip(qs, cs))
    length = max(len(q) + len(c) for q, c in pairs) + 3
    ids = np.full((len(pairs), length), PAD, dtype=np.int64)
    mask = np.zeros((len(pairs), length), dtype=bool)
    for i, (q, c) in enumerate(pairs):
        row = np.concatenate([[CLS], q, [SEP], c, [SEP]])
        ids[i, : len(row)] = row
        mask[i, : len(row)] = True
    return ids, mask


# -- models ----------------------------------------------------------------

class _SiameseBase(Module):
    def __init__(self, cfg, rng: RNG | None):
        rng = rng or RNG(cfg.seed)
        self.cfg = cfg
        self._rng = rng
        self.encoder = Encoder(cfg.vocab_size, cfg.d_model, cfg.num_heads, cfg.num_layers, cfg.max_len,
                               cfg.ffn_dim, rng.child("encoder"), cfg.dtype)
        self.cls_head = (FeedForward(3 * cfg.d_model, cfg.ffn_dim, rng.child("cls_head"), cfg.dtype,
                                     d_out=cfg.num_classes)
                         if cfg.task == "classification" else None)

    def pooled(self, ids, mask, scope: str) -> Tensor:
        with flop_scope(scope):
            return masked_mean(self.encoder.encode(ids, mask), mask)


class DualEncoder(_SiameseBase):
    """Shared encoder, mean pooling, dot-product relevance."""

    kind = "dual"

    def batch_scores(self, q_ids, q_mask, c_ids, c_mask) -> Tensor:
        u = self.pooled(q_ids, q_mask, QUERY)
        v = self.pooled(c_ids, c_mask, CANDIDATE)
        with flop_scope(HEAD):
            return u @ v.swapaxes(-1, -2)

    def pair_logits(self, q_ids, q_mask, c_ids, c_mask) -> Tensor:
        return classify(self.pooled(q_ids, q_mask, QUERY), self.pooled(c_ids, c_mask, CANDIDATE), self.cls_head)

    def prepare_candidates(self, c_ids, c_mask):
        with no_grad():
            return self.pooled(c_ids, c_mask, CANDIDATE).data

    def score_prepared(self, q_ids, q_mask, reps) -> np.ndarray:
        with no_grad():
            u = self.pooled(q_ids, q_mask, QUERY)
            with flop_scope(HEAD):
                return (u @ Tensor(reps).swapaxes(-1, -2)).data


class PolyEncoder(_SiameseBase):
    """Query compressed into ``poly_codes`` context vectors by learned codes."""

    kind = "poly"

    def __init__(self, cfg, rng: RNG | None = None):
        super().__init__(cfg, rng)
        self.codes = param(self._rng.child("poly_codes").normal((cfg.poly_codes, cfg.d_model), INIT_STD, cfg.dtype))

    def query_context(self, q_ids, q_mask) -> Tensor:
        with flop_scope(QUERY):
            y = self.encoder.encode(q_ids, q_mask)
            return F.attention(self.codes, y, y, 1, q_mask)  # (B, c, d)

    def batch_scores(self, q_ids, q_mask, c_ids, c_mask) -> Tensor:
        ctx = self.query_context(q_ids, q_mask)
        v = self.pooled(c_ids, c_mask, CANDIDATE)
        with flop_scope(HEAD):
            return baseline_poly_score(ctx, v)

    def pair_logits(self, q_ids, q_mask, c_ids, c_mask) -> Tensor:
        ctx = self.query_context(q_ids, q_mask)
        v = self.pooled(c_ids, c_mask, CANDIDATE)
        b, d = v.shape
        w = softmax_rows(v.reshape(b, 1, d) @ ctx.swapaxes(-1, -2))  # (B, 1, c)
        att = (w @ ctx).reshape(b, d)
        return classify(att, v, self.cls_head)

    def prepare_candidates(self, c_ids, c_mask):
        with no_grad():
            return self.pooled(c_ids, c_mask, CANDIDATE).data

    def score_prepared(self, q_ids, q_mask, reps) -> np.ndarray:
        with no_grad():
            ctx = self.query_context(q_ids, q_mask)
            with flop_scope(HEAD):
                return baseline_poly_score(ctx, Tensor(reps)).data


class MaxSimEncoder(_SiameseBase):
    """Token-level late interaction; candidates cache every token vector."""

    kind = "maxsim"

    def tokens(self, ids, mask, scope: str) -> Tensor:
        with flop_scope(scope):
            return self.encoder.encode(ids, mask)

    def batch_scores(self, q_ids, q_mask, c_ids, c_mask) -> Tensor:
        qt = self.tokens(q_ids, q_mask, QUERY)
        ct = self.tokens(c_ids, c_mask, CANDIDATE)
        with flop_scope(HEAD):
            return baseline_maxsim_score(qt, ct, q_mask, c_mask)

    def pair_logits(self, *args):
        raise NotImplementedError("MaxSim scoring has no classification head")

    def prepare_candidates(self, c_ids, c_mask):
        with no_grad():
            return self.tokens(c_ids, c_mask, CANDIDATE).data, np.asarray(c_mask, bool)

    def score_prepared(self, q_ids, q_mask, reps) -> np.ndarray:
        tok, mask = reps
        with no_grad():
            qt = self.tokens(q_ids, q_mask, QUERY)
            with flop_scope(HEAD):
                return baseline_maxsim_score(qt, Tensor(tok), q_mask, mask).data


class CrossEncoder(Module):
    """Joint encoding of every (query, candidate) pair; no candidate pre-computation."""

    kind = "cross"

    def __init__(self, cfg, rng: RNG | None = None):
        rng = rng or RNG(cfg.seed)
        self.cfg = cfg
        self.encoder = Encoder(cfg.vocab_size, cfg.d_model, cfg.num_heads, cfg.num_layers, cfg.max_len,
                               cfg.ffn_dim, rng.child("encoder"), cfg.dtype)
        out = 1 if cfg.task == "ranking" else cfg.num_classes
        self.head = Linear(cfg.d_model, out, rng.child("cross_head"), cfg.dtype)

    def score_pairs(self, pair_ids, pair_mask) -> Tensor:
        with flop_scope(PAIR):
            return baseline_cross_score(pair_ids, pair_mask, self.encoder, self.head)

    def batch_scores(self, q_ids, q_mask, c_ids, c_mask) -> Tensor:
        ids, mask = pair_arrays(q_ids, q_mask, c_ids, c_mask)
        return self.score_pairs(ids, mask).reshape(len(q_ids), len(c_ids))

    def pair_logits(self, q_ids, q_mask, c_ids, c_mask) -> Tensor:
        ids, mask = pair_arrays(q_ids, q_mask, c_ids, c_mask, all_pairs=False)
        return self.score_pairs(ids, mask)

    def prepare_candidates(self, c_ids, c_mask):
        return np.asarray(c_ids), np.asarray(c_mask, bool)

    def score_prepared(self, q_ids, q_mask, reps, chunk: int = 256) -> np.ndarray:
        c_ids, c_mask = reps
        rows = []
        with no_grad():
            for i in range(len(q_ids)):
                ids, mask = pair_arrays(q_ids[i : i + 1], q_mask[i : i + 1], c_ids, c_mask)
                rows.append(self.score_pair_arrays(ids, mask, chunk))
        return np.stack(rows)

    def score_pair_arrays(self, ids: np.ndarray, mask: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Scores for pre-built pair rows, encoded ``chunk`` rows at a time."""
        with no_grad():
            parts = [self.score_pairs(ids[s : s + chunk], mask[s : s + chunk]).data[:, 0]
                     for s in range(0, len(ids), chunk)]
        return np.concatenate(parts)
