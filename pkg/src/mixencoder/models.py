"""Model configuration, the MixEncoder model and the model factory."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .encoder import Encoder
from .heads import AblationFlags, classify, eq6_score, rank_score
from .interaction import InteractionLayer, LayerSchedule, run_schedule, variant_preset
from .numcore import FeedForward, Linear, Module, RNG, Tensor, broadcast_to, no_grad
from .numcore import functional as F
from .precompute import ContextCodes, PrecomputeStrategy, encode_candidates_C, encode_candidates_S

MODEL_NAMES = ("mix-a", "mix-b", "mix-c", "mix", "dual", "cross", "poly", "maxsim")


@dataclass
class ModelConfig:
    model: str = "mix-a"
    vocab_size: int = 1000
    d_model: int = 64
    num_heads: int = 4
    num_layers: int = 4
    max_len: int = 64
    ffn_dim: int = 256
    kmax: int = 10
    k: int = 1
    strategy: str = "S"
    interaction_positions: tuple[int, ...] = (4,)
    task: str = "ranking"  # or "classification"
    num_classes: int = 3
    poly_codes: int = 16
    float_bits: int = 32
    use_H: bool = True
    use_E: bool = True
    eq6_only: bool = False
    seed: int = 0

    def __post_init__(self):
        self.interaction_positions = tuple(int(p) for p in self.interaction_positions)
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODEL_NAMES}")
        if self.task not in ("ranking", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.float_bits not in (32, 64):
            raise ValueError("float_bits must be 32 or 64")
        if self.d_model % self.num_heads:
            raise F.ConfigError(f"d_model {self.d_model} not divisible by {self.num_heads} heads")

    @property
    def dtype(self):
        return np.float32 if self.float_bits == 32 else np.float64

    @property
    def flags(self) -> AblationFlags:
        return AblationFlags(self.use_H, self.use_E, self.eq6_only)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["interaction_positions"] = list(self.interaction_positions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def preset(cls, model: str, **overrides) -> "ModelConfig":
        """Config for a named model; mix-a/b/c fill in the schedule and k."""
        cfg = cls(model=model, **overrides)
        if model in ("mix-a", "mix-b", "mix-c"):
            schedule, k = variant_preset(model, cfg.num_layers)
            cfg.interaction_positions = schedule.interaction_positions
            if "k" not in overrides:
                cfg.k = k
        return cfg


class MixEncoder(Module):
    """Candidate pre-computation + query encoding with interaction layers."""

    kind = "mix"

    def __init__(self, cfg: ModelConfig, rng: RNG | None = None):
        rng = rng or RNG(cfg.seed)
        dt = cfg.dtype
        d = cfg.d_model
        self.cfg = cfg
        self.schedule = LayerSchedule(cfg.num_layers, cfg.interaction_positions)
        self.strategy = PrecomputeStrategy(cfg.strategy, cfg.k, cfg.kmax)
        self.flags = cfg.flags
        self.encoder = Encoder(cfg.vocab_size, d, cfg.num_heads, cfg.num_layers, cfg.max_len, cfg.ffn_dim,
                               rng.child("encoder"), dt)
        self.interactions = [InteractionLayer(d, cfg.num_heads, cfg.ffn_dim, rng.child(f"interaction{j}"), dt)
                             for j in range(self.schedule.num_interactions)]
        self.codes = ContextCodes(cfg.k, d, rng.child("codes"), dt) if cfg.strategy == "C" else None
        out = 1 if cfg.task == "ranking" else cfg.num_classes
        self.cls_head = (FeedForward(3 * d, cfg.ffn_dim, rng.child("cls_head"), dt, d_out=cfg.num_classes)
                         if cfg.task == "classification" else None)
        self.eq6_head = Linear(d, out, rng.child("eq6_head"), dt)
        self.h0_proj = Linear(d, d, rng.child("h0_proj"), dt)

    # -- offline ---------------------------------------------------------
    def precompute(self, ids: np.ndarray, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        """(E0 (N, k, d), h0 (N, d)) for a padded candidate batch."""
        if self.strategy.kind == "S":
            return encode_candidates_S(self.encoder, ids, mask, self.strategy.k)
        return encode_candidates_C(self.encoder, self.codes, ids, mask)

    # -- online ----------------------------------------------------------
    def interact(self, q_ids, q_mask, E0: Tensor, H0: Tensor, flags: AblationFlags | None = None):
        flags = flags or self.flags
        return run_schedule(self.encoder, self.interactions, self.schedule, q_ids, q_mask, E0, H0,
                            compute_state=flags.needs_state)

    def score_state(self, q: Tensor, q_mask, E: Tensor, H: Tensor, H0: Tensor,
                    flags: AblationFlags | None = None) -> Tensor:
        """Scores (..., N) for ranking or logits (..., N, C) for classification."""
        flags = flags or self.flags
        if flags.eq6_only:
            out = eq6_score(E, self.eq6_head) if self.cfg.task == "ranking" else self.eq6_head(E.mean(axis=-2))
            return out
        lead = E.shape[:-2]  # (..., N)
        e = E.mean(axis=-2)
        if flags.use_H:
            h = H
        else:
            qv = q.mean(axis=-2) if q_mask is None else F.masked_mean(q, q_mask)
            h = broadcast_to(qv.reshape(*qv.shape[:-1], 1, qv.shape[-1]), lead + (qv.shape[-1],))
        if not flags.use_E:
            e = self.h0_proj(H0)
            if e.shape != h.shape:
                e = broadcast_to(e, h.shape)
        if self.cfg.task == "ranking":
            return rank_score(h, e)
        return classify(h, e, self.cls_head)

    def forward(self, q_ids, q_mask, E0: Tensor, H0: Tensor, flags: AblationFlags | None = None) -> Tensor:
        q, E, H = self.interact(q_ids, q_mask, E0, H0, flags)
        return self.score_state(q, q_mask, E, H, H0, flags)

    # -- common model interface -----------------------------------------
    def batch_scores(self, q_ids, q_mask, c_ids, c_mask) -> Tensor:
        """(B_q, B_c) scores of every query against every candidate."""
        E0, h0 = self.precompute(c_ids, c_mask)
        return self.forward(q_ids, q_mask, E0, h0)

    def pair_logits(self, q_ids, q_mask, c_ids, c_mask) -> Tensor:
        """(B, C) logits for aligned (query_i, candidate_i) pairs."""
        E0, h0 = self.precompute(c_ids, c_mask)
        b = E0.shape[0]
        E0 = E0.reshape(b, 1, *E0.shape[1:])
        h0 = h0.reshape(b, 1, h0.shape[-1])
        out = self.forward(q_ids, q_mask, E0, h0)
        return out.reshape(b, out.shape[-1])

    def prepare_candidates(self, c_ids, c_mask):
        with no_grad():
            E0, h0 = self.precompute(c_ids, c_mask)
        return E0.data, h0.data

    def score_prepared(self, q_ids, q_mask, reps) -> np.ndarray:
        E0, h0 = reps
        with no_grad():
            return self.forward(q_ids, q_mask, Tensor(E0), Tensor(h0)).data


def build_model(cfg: ModelConfig, rng: RNG | None = None) -> Module:
    from . import baselines

    if cfg.model.startswith("mix"):
        return MixEncoder(cfg, rng)
    factory = {
        "dual": baselines.DualEncoder,
        "cross": baselines.CrossEncoder,
        "poly": baselines.PolyEncoder,
        "maxsim": baselines.MaxSimEncoder,
    }[cfg.model]
    return factory(cfg, rng)
