"""Minimal tensor engine: autodiff, layer primitives, Adam."""

from firedanger.tensor_core import functional
from firedanger.tensor_core.functional import (
    concat,
    conv2d,
    dropout,
    flatten,
    linear,
    max_pool2d,
    relu,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    tanh,
)
from firedanger.tensor_core.optim import Adam, AdamState, adam_step
from firedanger.tensor_core.tensor import Parameter, Tensor, backward, default_dtype, precision

__all__ = [
    "Adam",
    "AdamState",
    "Parameter",
    "Tensor",
    "adam_step",
    "backward",
    "concat",
    "conv2d",
    "default_dtype",
    "dropout",
    "flatten",
    "functional",
    "linear",
    "max_pool2d",
    "precision",
    "relu",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "tanh",
]
