"""Interaction layers and the L/I layer schedule.

An interaction layer maps ``(q, E, H) -> (q', E', H')``:

* query path: ordinary pre-norm self-attention + FFN over the query tokens. It
  never reads ``E`` or ``H``, so the query is encoded once however many
  candidates there are;
* candidate path: each candidate's k context rows attend over their own keys
  concatenated with the query keys ``[K'; K]``, then an FFN;
* state path: ``Q* = Lin(mean_k E)`` attends over the query keys, an FFN gives
  ``H*``, and an update gate fuses ``H*`` with the previous state.

The query path and the candidate path share the projection, output and FFN
weights (they are one transformer layer applied to two token streams). The
state path has its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import Encoder
from .numcore import FeedForward, LayerNorm, Linear, Module, RNG, Tensor, broadcast_to, concat, sigmoid
from .numcore import functional as F
from .numcore.flops import flop_scope

# FLOP scope labels
QUERY = "query"
CROSS_ATTENTION = "interaction/cross_attention"
CANDIDATE_FFN = "interaction/ffn"
STATE_ATTENTION = "interaction/state_attention"
STATE_FFN = "interaction/state_ffn"
GATE = "interaction/gate"


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSchedule:
    """Which of the ``num_layers`` positions (1-based) are interaction layers."""

    num_layers: int
    interaction_positions: tuple[int, ...]

    def __post_init__(self):
        pos = tuple(self.interaction_positions)
        object.__setattr__(self, "interaction_positions", pos)
        if self.num_layers < 1:
            raise ScheduleError("num_layers must be >= 1")
        if not pos:
            raise ScheduleError("a schedule needs at least one interaction layer")
        if list(pos) != sorted(set(pos)):
            raise ScheduleError(f"interaction positions must be strictly increasing, got {pos}")
        if pos[0] < 1 or pos[-1] > self.num_layers:
            raise ScheduleError(f"positions {pos} outside 1..{self.num_layers}")

    @property
    def num_interactions(self) -> int:
        return len(self.interaction_positions)

    def describe(self) -> str:
        """e.g. ``{L1, I2^1, L3, L4, I5^2}``"""
        parts, j = [], 0
        for i in range(1, self.num_layers + 1):
            if i in self.interaction_positions:
                j += 1
                parts.append(f"I{i}^{j}")
            else:
                parts.append(f"L{i}")
        return "{" + ", ".join(parts) + "}"


def variant_preset(name: str, num_layers: int = 12) -> tuple[LayerSchedule, int]:
    """Schedules of the a/b/c variants, scaled to ``num_layers``.

    On 12 layers: a = {12} with k=1, b = {10, 11, 12} with k=1, c = b with k=2.
    Smaller stacks keep the last one (a) or last three (b, c) layers.
    """
    name = name.lower().removeprefix("mix-")
    if name == "a":
        if num_layers < 1:
            raise ScheduleError("variant a needs at least 1 layer")
        return LayerSchedule(num_layers, (num_layers,)), 1
    if name in ("b", "c"):
        if num_layers < 3:
            raise ScheduleError(f"variant {name} needs at least 3 layers, got {num_layers}")
        positions = (num_layers - 2, num_layers - 1, num_layers)
        return LayerSchedule(num_layers, positions), 1 if name == "b" else 2
    raise ScheduleError(f"unknown variant {name!r}")


@dataclass
class InteractionState:
    q: Tensor  # (..., m, d)
    E: Tensor  # (..., N, k, d)
    H: Tensor  # (..., N, d)

    def __post_init__(self):
        if self.E.ndim < 3 or self.H.ndim < 2:
            raise ValueError(f"bad state shapes E {self.E.shape} H {self.H.shape}")
        if self.E.shape[-3] != self.H.shape[-2]:
            raise ValueError(f"E has {self.E.shape[-3]} candidates but H has {self.H.shape[-2]}")
        if self.E.shape[-3] == 0:
            raise ValueError("no candidates")


class Gate(Module):
    """Update gate: ``z = sigmoid(W [h*; h] + b)``, ``out = z * h* + (1 - z) * h``."""

    def __init__(self, d: int, rng: RNG, dtype=np.float32):
        self.lin = Linear(2 * d, d, rng, dtype)

    def __call__(self, h_star: Tensor, h_prev: Tensor) -> Tensor:
        if h_star.shape != h_prev.shape:
            raise ValueError(f"gate inputs differ in shape: {h_star.shape} vs {h_prev.shape}")
        z = sigmoid(self.lin(concat([h_star, h_prev], axis=-1)))
        return z * h_star + (1.0 - z) * h_prev


def gate(h_star: Tensor, h_prev: Tensor, params: Gate) -> Tensor:
    return params(h_star, h_prev)


def _split3(x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    d = x.shape[-1] // 3
    return x[..., :d], x[..., d : 2 * d], x[..., 2 * d :]


class InteractionLayer(Module):
    def __init__(self, d: int, heads: int, ffn_dim: int, rng: RNG, dtype=np.float32):
        self.heads = heads
        # shared by the query and candidate paths
        self.ln_attn = LayerNorm(d, dtype)
        self.qkv = Linear(d, 3 * d, rng, dtype)
        self.attn_out = Linear(d, d, rng, dtype)
        self.ln_ffn = LayerNorm(d, dtype)
        self.ffn = FeedForward(d, ffn_dim, rng, dtype)
        # state path
        self.pool_proj = Linear(d, d, rng, dtype)
        self.state_out = Linear(d, d, rng, dtype)
        self.ln_state = LayerNorm(d, dtype)
        self.state_ffn = FeedForward(d, ffn_dim, rng, dtype)
        self.gate = Gate(d, rng, dtype)

    def query_path(self, q: Tensor, query_mask: np.ndarray | None) -> tuple[Tensor, Tensor, Tensor]:
        """Returns (q_out, K, V); K and V are reused by the candidate and state paths."""
        with flop_scope(QUERY):
            qq, kq, vq = _split3(self.qkv(self.ln_attn(q)))
            x = q + F.attention(qq, kq, vq, self.heads, query_mask, self.attn_out.weight, self.attn_out.bias)
            q_out = x + self.ffn(self.ln_ffn(x))
        return q_out, kq, vq

    def candidate_path(self, E: Tensor, kq: Tensor, vq: Tensor, query_mask: np.ndarray | None) -> Tensor:
        with flop_scope(CROSS_ATTENTION):
            qc, kc, vc = _split3(self.qkv(self.ln_attn(E)))
            x = E + F.concat_key_attention(qc, kc, vc, kq, vq, self.heads, query_mask,
                                           self.attn_out.weight, self.attn_out.bias)
        with flop_scope(CANDIDATE_FFN):
            return x + self.ffn(self.ln_ffn(x))

    def state_path(self, E: Tensor, H: Tensor, kq: Tensor, vq: Tensor, query_mask: np.ndarray | None) -> Tensor:
        with flop_scope(STATE_ATTENTION):
            q_star = self.pool_proj(E.mean(axis=-2))
            a = F.attention(q_star, kq, vq, self.heads, query_mask, self.state_out.weight, self.state_out.bias)
        with flop_scope(STATE_FFN):
            h_star = a + self.state_ffn(self.ln_state(a))
        with flop_scope(GATE):
            return self.gate(h_star, H)

    def __call__(self, state: InteractionState, query_mask: np.ndarray | None = None,
                 compute_state: bool = True) -> InteractionState:
        if query_mask is not None and not np.asarray(query_mask).any(axis=-1).all():
            raise ValueError("query mask has no real token")
        q, E, H = state.q, state.E, state.H
        lead = q.shape[:-2]
        if E.shape[:-3] != lead:
            E = broadcast_to(E, lead + E.shape[-3:])
        if H.shape[:-2] != lead:
            H = broadcast_to(H, lead + H.shape[-2:])
        q_out, kq, vq = self.query_path(q, query_mask)
        E_out = self.candidate_path(E, kq, vq, query_mask)
        H_out = self.state_path(E, H, kq, vq, query_mask) if compute_state else H
        return InteractionState(q_out, E_out, H_out)


def interaction_layer(state: InteractionState, params: InteractionLayer, query_mask=None) -> InteractionState:
    return params(state, query_mask)


def run_schedule(
    encoder: Encoder,
    layers: list[InteractionLayer],
    schedule: LayerSchedule,
    q_ids: np.ndarray,
    q_mask: np.ndarray | None,
    E0: Tensor,
    H0: Tensor,
    compute_state: bool = True,
) -> tuple[Tensor, Tensor, Tensor]:
    """Run the query through positions 1..L, using interaction layers where scheduled.

    Transformer layers only see ``q``; interaction layers update ``(q, E, H)``.
    """
    if schedule.num_layers != encoder.num_layers:
        raise ScheduleError(f"schedule covers {schedule.num_layers} layers, encoder has {encoder.num_layers}")
    if len(layers) != schedule.num_interactions:
        raise ScheduleError(f"{len(layers)} interaction layers for {schedule.num_interactions} positions")
    if E0.shape[-1] != encoder.d or H0.shape[-1] != encoder.d:
        raise ValueError(f"cache width {E0.shape[-1]} does not match model width {encoder.d}")
    with flop_scope(QUERY):
        x = encoder.embed(q_ids)
    state = None
    E, H = E0, H0
    j = 0
    for pos in range(1, schedule.num_layers + 1):
        if pos in schedule.interaction_positions:
            state = layers[j](InteractionState(x, E, H), q_mask, compute_state)
            x, E, H = state.q, state.E, state.H
            j += 1
        else:
            with flop_scope(QUERY):
                x = encoder.layers[pos - 1](x, q_mask)
    return x, E, H
