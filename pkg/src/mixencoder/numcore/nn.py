"""Parameter containers over the functional ops."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .rng import RNG
from .tensor import Tensor

INIT_STD = 0.02


def param(array: np.ndarray) -> Tensor:
    return Tensor(array, requires_grad=True)


class Module:
    """Walks attributes to find parameters: Tensors with ``requires_grad``, sub-modules
    and lists of sub-modules. Names are dotted attribute paths."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{full}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: RNG, dtype=np.float32, bias: bool = True):
        self.weight = param(rng.normal((d_in, d_out), INIT_STD, dtype))
        self.bias = param(np.zeros(d_out, dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, dtype=np.float32, eps: float = 1e-5):
        self.gamma = param(np.ones(d, dtype))
        self.beta = param(np.zeros(d, dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta, self.eps)


class FeedForward(Module):
    def __init__(self, d: int, inner: int, rng: RNG, dtype=np.float32, d_out: int | None = None):
        self.fc1 = Linear(d, inner, rng, dtype)
        self.fc2 = Linear(inner, d if d_out is None else d_out, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return F.ffn(x, self.fc1.weight, self.fc1.bias, self.fc2.weight, self.fc2.bias)
