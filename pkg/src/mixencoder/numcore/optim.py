"""Adam with a linear warmup / linear decay learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def warmup_linear(step: int, total_steps: int, warmup_frac: float = 0.05) -> float:
    """Multiplier in [0, 1] for ``step`` (0-based) of ``total_steps``."""
    warmup = max(1, int(round(total_steps * warmup_frac)))
    if step < warmup:
        return (step + 1) / warmup
    remaining = max(1, total_steps - warmup)
    return max(0.0, (total_steps - step) / remaining)


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr_scale: float = 1.0) -> None:
        self.t += 1
        lr = self.lr * lr_scale
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            if lr == 0.0:
                continue
            update = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - update).astype(p.dtype, copy=False)
