"""Attention-module complexity of dual, cross and mix encoders.

``h`` is the hidden width, ``q`` / ``d`` the query / candidate lengths, ``k``
the number of context embeddings and ``N_c`` the number of candidates. The
expressions keep dominant terms only; constant factors are dropped.

============  =================  ========================================
model         pre-computation    online
============  =================  ========================================
dual          h d^2 + h^2 d      h q^2 + h^2 q
cross         0                  N_c (h (q+d)^2 + h^2 (q+d))
mix           h d^2 + h^2 d      h q^2 + h^2 q + N_c (k + q + h) h k
============  =================  ========================================
"""

from __future__ import annotations

from dataclasses import dataclass

KINDS = ("dual", "cross", "mix")


class CostError(ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CostError(f"unknown model kind {self.kind!r}; choose from {KINDS}")

    def precompute(self, h: int, d: int) -> int:
        if self.kind == "cross":
            return 0
        return h * d * d + h * h * d

    def online(self, h: int, q: int, d: int, k: int, n_c: int) -> int:
        if self.kind == "cross":
            t = q + d
            return n_c * (h * t * t + h * h * t)
        base = h * q * q + h * h * q
        if self.kind == "dual":
            return base
        return base + n_c * self.per_candidate(h, q, k)

    def per_candidate(self, h: int, q: int, k: int) -> int:
        """Online cost slope in N_c for mix: (k + q + h) h k."""
        if self.kind != "mix":
            raise CostError("per-candidate slope is defined for mix only")
        return (k + q + h) * h * k

    def expression(self) -> tuple[str, str]:
        return {
            "dual": ("h*d^2 + h^2*d", "h*q^2 + h^2*q"),
            "cross": ("0", "N_c*(h*(q+d)^2 + h^2*(q+d))"),
            "mix": ("h*d^2 + h^2*d", "h*q^2 + h^2*q + N_c*(k+q+h)*h*k"),
        }[self.kind]


def cost_eval(model_kind: str, h: int, q: int, d: int = 1, k: int = 1, n_c: int = 1) -> tuple[int, int]:
    """(pre-computation cost, online cost) as exact integers.

    ``n_c`` may be 0; every other parameter must be positive.
    """
    for name, v in (("h", h), ("q", q), ("d", d), ("k", k)):
        if not isinstance(v, int) or v <= 0:
            raise CostError(f"{name} must be a positive integer, got {v!r}")
    if not isinstance(n_c, int) or n_c < 0:
        raise CostError(f"N_c must be a nonnegative integer, got {n_c!r}")
    model = CostModel(model_kind)
    return model.precompute(h, d), model.online(h, q, d, k, n_c)


def measured_interaction_flops_per_candidate(h: int, q: int, k: int) -> int:
    """Matmul FLOPs of one candidate's cross-attention in one interaction layer.

    Four h x h projections of k rows (q, k, v, out) plus the two products
    against ``k + q`` keys, at 2 FLOPs per multiply-add:
    2 (4 k h^2 + 2 k (k + q) h). Its dominant terms are the (k + q + h) h k of
    the table up to a constant.
    """
    return 2 * (4 * k * h * h + 2 * k * (k + q) * h)
