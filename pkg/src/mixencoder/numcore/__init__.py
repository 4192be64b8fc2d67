"""Minimal dense tensor engine with reverse-mode differentiation."""

from . import flops
from .functional import (
    ConfigError,
    attention,
    concat_key_attention,
    cross_entropy,
    ffn,
    l2_normalize,
    linear,
    masked_mean,
    softmax_rows,
)
from .nn import FeedForward, LayerNorm, Linear, Module
from .optim import Adam, warmup_linear
from .rng import RNG
from .tensor import (
    GraphError,
    ShapeError,
    Tensor,
    broadcast_to,
    concat,
    embedding,
    exp,
    gelu,
    layer_norm,
    log,
    log_softmax,
    matmul,
    no_grad,
    sigmoid,
    softmax,
    sqrt,
    stack,
    tabs,
    tanh,
    tmax,
    tsum,
)

__all__ = [
    "Adam", "ConfigError", "FeedForward", "GraphError", "LayerNorm", "Linear", "Module", "RNG",
    "ShapeError", "Tensor", "attention", "broadcast_to", "concat", "concat_key_attention",
    "cross_entropy", "embedding", "exp", "ffn", "flops", "gelu", "l2_normalize", "layer_norm",
    "linear", "log", "log_softmax", "masked_mean", "matmul", "no_grad", "sigmoid", "softmax",
    "softmax_rows", "sqrt", "stack", "tabs", "tanh", "tmax", "tsum", "warmup_linear",
]
