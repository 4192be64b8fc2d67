"""Ablation runs over the scoring switches, with pathway isolation checks."""

from __future__ import annotations

import dataclasses

import numpy as np

from .corpus import Corpus
from .heads import AblationFlags
from .models import ModelConfig, MixEncoder
from .numcore import Tensor, no_grad
from .training import MetricsLog, TrainConfig, train

ABLATIONS = ("original", "no_H", "no_E", "eq6")

# A linear read-out of E has no multiplicative query-candidate term at
# initialisation, so from scratch it sits on a plateau that a larger step escapes.
LR_SCALE = {"eq6": 10.0}


def pathway_outputs(model: MixEncoder, q_ids, q_mask, E0: np.ndarray, H0: np.ndarray, flags: AblationFlags) -> dict:
    """Final (q, E, H) and score under ``flags``; H is None when the state path is skipped."""
    with no_grad():
        q, E, H = model.interact(q_ids, q_mask, Tensor(E0), Tensor(H0), flags)
        score = model.score_state(q, q_mask, E, H, Tensor(H0), flags)
    return {"q": q.data, "E": E.data, "H": H.data if flags.needs_state else None, "score": score.data}


def pathway_check(model: MixEncoder, q_ids, q_mask, E0: np.ndarray, H0: np.ndarray) -> dict[str, bool]:
    """Bitwise equality of the pathways each switch must leave alone.

    * no_H skips the state path: q and E match the original run.
    * no_E replaces the candidate side of the score: q, E and H match.
    * eq6 scores from E only: q and E match.
    """
    ref = pathway_outputs(model, q_ids, q_mask, E0, H0, AblationFlags())
    out = {}
    for name in ABLATIONS[1:]:
        run = pathway_outputs(model, q_ids, q_mask, E0, H0, AblationFlags.from_name(name))
        keys = ("q", "E", "H") if name == "no_E" else ("q", "E")
        out[name] = all(np.array_equal(ref[k], run[k]) for k in keys)
    return out


def run_ablation(corpus: Corpus, base: ModelConfig, train_cfg: TrainConfig,
                 names=ABLATIONS, log_dir=None, lr_scale: dict[str, float] | None = None) -> dict[str, dict]:
    """Train one model per switch setting from the same seed; returns metrics per setting.

    ``lr_scale`` multiplies ``train_cfg.lr`` per setting (default :data:`LR_SCALE`).
    """
    lr_scale = LR_SCALE if lr_scale is None else lr_scale
    results = {}
    for name in names:
        flags = AblationFlags.from_name(name)
        cfg = dataclasses.replace(base, use_H=flags.use_H, use_E=flags.use_E, eq6_only=flags.eq6_only)
        model = MixEncoder(cfg)
        tcfg = dataclasses.replace(train_cfg, lr=train_cfg.lr * lr_scale.get(name, 1.0))
        log = MetricsLog(f"{log_dir}/{name}.jsonl" if log_dir else None)
        try:
            results[name] = train(model, corpus, tcfg, log)
        finally:
            log.close()
    return results
