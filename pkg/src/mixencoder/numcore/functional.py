"""Composite ops built from the differentiable primitives in :mod:`tensor`."""

from __future__ import annotations

import math

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    concat,
    gelu,
    layer_norm,
    log_softmax,
    matmul,
    softmax,
    sqrt,
    tsum,
)


class ConfigError(ValueError):
    """Hyperparameters are inconsistent (e.g. width not divisible by head count)."""


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight + bias`` over the last axis; ``weight`` is (in, out)."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    if x.ndim == 1:
        out = matmul(x.reshape(1, -1), weight).reshape(weight.shape[1])
    else:
        out = matmul(x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"linear: bias shape {bias.shape} != ({weight.shape[1]},)")
        out = out + bias
    return out


def ffn(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Position-wise feed-forward: linear -> GELU -> linear."""
    return linear(gelu(linear(x, w1, b1)), w2, b2)


def softmax_rows(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    return softmax(x, mask, axis=-1)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    # (..., n, d) -> (..., heads, n, d/heads)
    *lead, n, d = x.shape
    return x.reshape(*lead, n, heads, d // heads).swapaxes(-2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    # (..., heads, n, dh) -> (..., n, heads*dh)
    *lead, h, n, dh = x.shape
    return x.swapaxes(-2, -3).reshape(*lead, n, h * dh)


def _check_heads(d: int, heads: int) -> None:
    if heads < 1 or d % heads:
        raise ConfigError(f"model width {d} is not divisible by {heads} heads")


def attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    heads: int = 1,
    key_mask: np.ndarray | None = None,
    out_weight: Tensor | None = None,
    out_bias: Tensor | None = None,
) -> Tensor:
    """Multi-head scaled dot-product attention over already-projected Q, K, V.

    ``q`` is (..., a, d); ``k`` and ``v`` are (..., b, d). ``key_mask`` is a
    boolean (..., b) array, True for keys that may be attended. Head outputs are
    concatenated and, if ``out_weight`` is given, passed through that projection.
    """
    d = q.shape[-1]
    _check_heads(d, heads)
    if k.shape[-1] != d or v.shape[-1] != d:
        raise ShapeError(f"attention: head dims differ {q.shape} {k.shape} {v.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: {k.shape[-2]} keys but {v.shape[-2]} values")
    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    logits = matmul(qh, kh.swapaxes(-1, -2)) * (1.0 / math.sqrt(d // heads))
    mask = None
    if key_mask is not None:
        # (..., b) -> (..., 1, 1, b) against (..., heads, a, b)
        mask = np.asarray(key_mask, dtype=bool)[..., None, None, :]
    weights = softmax_rows(logits, mask)
    out = _merge_heads(matmul(weights, vh))
    if out_weight is not None:
        out = linear(out, out_weight, out_bias)
    return out


def concat_key_attention(
    qc: Tensor,
    kc: Tensor,
    vc: Tensor,
    kq: Tensor,
    vq: Tensor,
    heads: int = 1,
    query_mask: np.ndarray | None = None,
    out_weight: Tensor | None = None,
    out_bias: Tensor | None = None,
) -> Tensor:
    """Candidate-side attention over the concatenated keys ``[kc; kq]``.

    ``qc``, ``kc``, ``vc`` are per-candidate (..., N, k, d); ``kq`` and ``vq`` come
    from the query (..., m, d) and are shared by all N candidates, so the
    query-key products are one matmul over N*k rows rather than N small ones.
    ``query_mask`` (..., m) excludes padded query positions. Each candidate row
    sees its own k keys plus the m query keys and nothing from other candidates.
    """
    *lead, n, kk, d = qc.shape
    m = kq.shape[-2]
    if tuple(kq.shape[:-2]) != tuple(lead):
        raise ShapeError(f"concat_key_attention: candidate batch {qc.shape} vs query batch {kq.shape}")
    _check_heads(d, heads)
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    lead = tuple(lead)

    # per-candidate heads: (..., N, heads, k, dh)
    qch = qc.reshape(*lead, n, kk, heads, dh).swapaxes(-2, -3)
    kch = kc.reshape(*lead, n, kk, heads, dh).swapaxes(-2, -3)
    vch = vc.reshape(*lead, n, kk, heads, dh).swapaxes(-2, -3)
    # query heads: (..., heads, m, dh)
    kqh, vqh = _split_heads(kq, heads), _split_heads(vq, heads)

    self_logits = matmul(qch, kch.swapaxes(-1, -2)) * scale  # (..., N, H, k, k)
    # (..., H, N*k, dh) @ (..., H, dh, m)
    qflat = qch.swapaxes(-3, -4).reshape(*lead, heads, n * kk, dh)
    cross_logits = matmul(qflat, kqh.swapaxes(-1, -2)) * scale  # (..., H, N*k, m)
    cross_logits = cross_logits.reshape(*lead, heads, n, kk, m).swapaxes(-4, -3)  # (..., N, H, k, m)

    logits = concat([self_logits, cross_logits], axis=-1)  # keys ordered [own; query]
    mask = None
    if query_mask is not None:
        qm = np.asarray(query_mask, dtype=bool)[..., None, None, None, :]  # (..., 1, 1, 1, m)
        own = np.ones(qm.shape[:-1] + (kk,), dtype=bool)
        mask = np.concatenate([own, qm], axis=-1)
    weights = softmax_rows(logits, mask)
    w_self = weights[..., :kk]
    w_cross = weights[..., kk:]

    out_self = matmul(w_self, vch)  # (..., N, H, k, dh)
    wc = w_cross.swapaxes(-4, -3).reshape(*lead, heads, n * kk, m)
    out_cross = matmul(wc, vqh).reshape(*lead, heads, n, kk, dh).swapaxes(-4, -3)
    out = (out_self + out_cross).swapaxes(-2, -3).reshape(*lead, n, kk, d)
    if out_weight is not None:
        out = linear(out, out_weight, out_bias)
    return out


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over axis -2 of (..., m, d) restricted to rows where ``mask`` (..., m) is True."""
    m = np.asarray(mask, dtype=x.dtype)[..., None]
    count = m.sum(axis=-2)
    if (count == 0).any():
        raise ShapeError("masked_mean over an empty sequence")
    return tsum(x * m, axis=-2) / count


def l2_normalize(x: Tensor, eps: float = 1e-30) -> Tensor:
    return x / sqrt(tsum(x * x, axis=-1, keepdims=True) + eps)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under row-wise softmax."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    lp = log_softmax(logits, axis=-1)
    picked = lp[np.arange(len(targets)), targets]
    return -picked.mean()


__all__ = [
    "ConfigError",
    "attention",
    "concat_key_attention",
    "cross_entropy",
    "ffn",
    "gelu",
    "l2_normalize",
    "layer_norm",
    "linear",
    "masked_mean",
    "softmax_rows",
]
