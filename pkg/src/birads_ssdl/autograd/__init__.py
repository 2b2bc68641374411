"""Minimal reverse-mode autodiff engine used by the networks."""

from .layers import (activation, conv2d, dense, dropout, flatten, linear, maxpool2d,
                     relu, softmax, upsample2d)
from .optim import AdamState, adam_step, zero_grad
from .tensor import (Parameter, ShapeError, Tensor, add, cast, clip, log, mul, neg, reshape,
                     select, square, tensor_mean, tensor_sum)

__all__ = [
    "Tensor", "Parameter", "ShapeError",
    "add", "cast", "mul", "neg", "square", "log", "clip", "reshape", "select",
    "tensor_sum", "tensor_mean",
    "conv2d", "maxpool2d", "upsample2d", "dense", "relu", "softmax", "linear",
    "activation", "dropout", "flatten",
    "AdamState", "adam_step", "zero_grad",
]
