"""Differentiable layer operations.

Convolutions use an im2col layout so both directions reduce to one BLAS
matrix product; the transposed convolution reuses the same two kernels in
swapped roles, which makes it the exact adjoint of :func:`conv2d`.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dealias.errors import DegenerateBatch, InvalidArgument
from dealias.nn.tensor import Tensor, as_tensor

LEAKY_SLOPE = 0.2
BN_MOMENTUM = 0.9
BN_EPS = 1e-5


# -- convolution kernels on raw arrays ---------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> tuple[np.ndarray, int, int]:
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return cols, ho, wo


def _col2im(cols: np.ndarray, x_shape: tuple[int, ...], kh: int, kw: int, stride: int, padding: int,
            ho: int, wo: int) -> np.ndarray:
    """Scatter-add columns of shape (N*Ho*Wo, C*kh*kw) back to an N×C×H×W array."""
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    blocks = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += blocks[:, :, i, j]
    if padding:
        out = out[:, :, padding : padding + h, padding : padding + w]
    return out


def _check_4d(name: str, t: Tensor) -> None:
    if t.ndim != 4:
        raise InvalidArgument(f"{name} must be 4-D (N, C, H, W), got shape {t.shape}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation. ``weight`` has shape (Cout, Cin, kh, kw)."""
    x = as_tensor(x)
    weight = as_tensor(weight)
    _check_4d("input", x)
    _check_4d("weight", weight)
    if stride < 1 or padding < 0:
        raise InvalidArgument("stride must be positive and padding nonnegative")
    cout, cin, kh, kw = weight.shape
    n, c, h, w = x.shape
    if c != cin:
        raise InvalidArgument(f"input has {c} channels but weight expects {cin}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise InvalidArgument("kernel larger than padded input")

    cols, ho, wo = _im2col(x.data, kh, kw, stride, padding)
    wmat = weight.data.reshape(cout, -1)
    out = (cols @ wmat.T).reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, cout, 1, 1)
    out = np.ascontiguousarray(out)
    x_shape = x.shape

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gx = _col2im(g2 @ wmat, x_shape, kh, kw, stride, padding, ho, wo) if x.requires_grad else None
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward)


def conv2d_transpose(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Transposed convolution. ``weight`` has shape (Cin, Cout, kh, kw).

    The output extent is ``(H - 1) * stride - 2 * padding + kh``.
    """
    x = as_tensor(x)
    weight = as_tensor(weight)
    _check_4d("input", x)
    _check_4d("weight", weight)
    cin, cout, kh, kw = weight.shape
    n, c, h, w = x.shape
    if c != cin:
        raise InvalidArgument(f"input has {c} channels but weight expects {cin}")
    ho = (h - 1) * stride - 2 * padding + kh
    wo = (w - 1) * stride - 2 * padding + kw
    if ho <= 0 or wo <= 0 or stride < 1 or padding < 0:
        raise InvalidArgument(f"invalid transposed-conv geometry, implied output {ho}x{wo}")

    wmat = weight.data.reshape(cin, -1)
    x2 = x.data.transpose(0, 2, 3, 1).reshape(-1, cin)
    out = _col2im(x2 @ wmat, (n, cout, ho, wo), kh, kw, stride, padding, h, w)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, cout, 1, 1)

    def backward(g):
        cols, _, _ = _im2col(g, kh, kw, stride, padding)
        gx = None
        if x.requires_grad:
            gx = (cols @ wmat.T).reshape(n, h, w, cin).transpose(0, 3, 1, 2)
            gx = np.ascontiguousarray(gx)
        gw = (x2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward)


# -- normalisation ------------------------------------------------------------

def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = BN_MOMENTUM, eps: float = BN_EPS) -> Tensor:
    """Per-channel batch normalisation over (N, H, W).

    In training mode the batch statistics are used and the running
    statistics are updated in place as ``momentum * old + (1 - momentum) * new``.
    The running variance uses the unbiased estimate.
    """
    x = as_tensor(x)
    _check_4d("input", x)
    n, c, h, w = x.shape
    g_ = gamma.data.reshape(1, c, 1, 1)
    b_ = beta.data.reshape(1, c, 1, 1)
    if training:
        count = n * h * w
        if count < 2:
            raise DegenerateBatch("batch norm in training mode needs at least two values per channel")
        mean = x.data.mean(axis=(0, 2, 3), keepdims=True)
        centered = x.data - mean
        var = (centered * centered).mean(axis=(0, 2, 3), keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean.reshape(c)
        running_var *= momentum
        running_var += (1.0 - momentum) * var.reshape(c) * (count / (count - 1))
        out = xhat * g_ + b_

        def backward(g):
            gxhat = g * g_
            gx = None
            if x.requires_grad:
                s1 = gxhat.sum(axis=(0, 2, 3), keepdims=True)
                s2 = (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = (inv_std / count) * (count * gxhat - s1 - xhat * s2)
            ggamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
            gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
            return gx, ggamma, gbeta
    else:
        inv_std = (1.0 / np.sqrt(running_var + eps)).astype(x.dtype).reshape(1, c, 1, 1)
        xhat = (x.data - running_mean.astype(x.dtype).reshape(1, c, 1, 1)) * inv_std
        out = xhat * g_ + b_

        def backward(g):
            gx = g * g_ * inv_std if x.requires_grad else None
            ggamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
            gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
            return gx, ggamma, gbeta

    return Tensor._make(out.astype(x.dtype, copy=False), (x, gamma, beta), backward)


# -- activations ----------------------------------------------------------------

def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    x = as_tensor(x)
    pos = x.data >= 0
    out = np.where(pos, x.data, slope * x.data)
    return Tensor._make(out, (x,), lambda g: (np.where(pos, g, slope * g),))


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    out = np.where(pos, x.data, 0).astype(x.dtype, copy=False)
    return Tensor._make(out, (x,), lambda g: (np.where(pos, g, 0).astype(g.dtype, copy=False),))


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return Tensor._make(out, (x,), lambda g: (g * (1 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1 / (1 + z), z / (1 + z)).astype(x.dtype, copy=False)
    return Tensor._make(out, (x,), lambda g: (g * out * (1 - out),))


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)
    a = x.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a)
    return Tensor._make(out, (x,), lambda g: (g / a,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to ``[lo, hi]``; the gradient passes where the input is inside the closed interval."""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    out = np.clip(x.data, lo, hi)
    return Tensor._make(out, (x,), lambda g: (np.where(inside, g, 0).astype(g.dtype, copy=False),))


# -- structural ops -------------------------------------------------------------

def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map for an N×F input with an F×G weight."""
    x = as_tensor(x)
    weight = as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise InvalidArgument(f"dense shape mismatch: {x.shape} @ {weight.shape}")
    out = x @ weight
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[1],):
            raise InvalidArgument(f"bias shape {bias.shape} does not match output width {weight.shape[1]}")
        out = out + bias
    return out


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._make(out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping average pooling with window and stride ``size``."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % size or w % size:
        raise InvalidArgument(f"spatial size {h}x{w} not divisible by pool size {size}")
    out = x.data.reshape(n, c, h // size, size, w // size, size).mean(axis=(3, 5))
    scale = 1.0 / (size * size)

    def backward(g):
        up = np.repeat(np.repeat(g, size, axis=2), size, axis=3)
        return (up * scale,)

    return Tensor._make(out, (x,), backward)
