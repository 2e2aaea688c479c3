"""Minimal reverse-mode autodiff with the layers the de-aliasing networks use."""

from dealias.nn.functional import (
    avg_pool2d,
    batch_norm,
    clamp,
    concat,
    conv2d,
    conv2d_transpose,
    dense,
    leaky_relu,
    log,
    relu,
    sigmoid,
    tanh,
)
from dealias.nn.layers import BatchNorm2d, Conv2d, ConvTranspose2d, Dense, Module
from dealias.nn.optim import Adam, AdamState, adam_step
from dealias.nn.tensor import Tensor, as_tensor, grad_enabled, no_grad, parameter

__all__ = [
    "Adam", "AdamState", "BatchNorm2d", "Conv2d", "ConvTranspose2d", "Dense", "Module", "Tensor",
    "adam_step", "as_tensor", "avg_pool2d", "batch_norm", "clamp", "concat", "conv2d",
    "conv2d_transpose", "dense", "grad_enabled", "leaky_relu", "log", "no_grad", "parameter",
    "relu", "sigmoid", "tanh",
]
