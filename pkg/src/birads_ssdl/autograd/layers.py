"""Layer primitives: convolution, pooling, upsampling, dense, activations, dropout.

Spatial tensors are batched ``(B, C, H, W)``; vectors are ``(B, d)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, _result, reshape


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 cross-correlation with zero same-padding.

    ``x`` is ``(B, C_in, H, W)``, ``kernel`` is ``(C_out, C_in, kH, kW)`` with
    odd ``kH``/``kW``, ``bias`` is ``(C_out,)``.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    B, C, H, W = x.shape
    O, Ck, kh, kw = kernel.shape
    if Ck != C:
        raise ShapeError(f"conv2d channel mismatch: input has {C}, kernel expects {Ck}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel must be odd-sized, got {kh}x{kw}")
    if bias.shape != (O,):
        raise ShapeError(f"conv2d bias shape {bias.shape} != ({O},)")
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    # im2col in channel-first order: cols[b, (u, v, c), h*w]
    cols = np.empty((B, kh * kw, C, H, W), dtype=padded.dtype)
    for u in range(kh):
        for v in range(kw):
            cols[:, u * kw + v] = padded[:, :, u:u + H, v:v + W]
    cols = cols.reshape(B, kh * kw * C, H * W)
    kmat = kernel.data.transpose(0, 2, 3, 1).reshape(O, kh * kw * C)
    out = (kmat @ cols).reshape(B, O, H, W) + bias.data[:, None, None]

    def backward(g):
        g3 = g.reshape(B, O, H * W)
        dkernel = dbias = dx = None
        if kernel.requires_grad:
            dk = np.matmul(g3, cols.transpose(0, 2, 1)).sum(axis=0)
            dkernel = dk.reshape(O, kh, kw, C).transpose(0, 3, 1, 2)
        if bias.requires_grad:
            dbias = g3.sum(axis=(0, 2))
        if x.requires_grad:
            if O == 1:
                dcols = kmat[0][None, :, None] * g3
            else:
                dcols = kmat.T @ g3
            dcols = dcols.reshape(B, kh * kw, C, H, W)
            dpad = np.zeros_like(padded)
            for u in range(kh):
                for v in range(kw):
                    dpad[:, :, u:u + H, v:v + W] += dcols[:, u * kw + v]
            dx = dpad[:, :, ph:ph + H, pw:pw + W]
        return dx, dkernel, dbias

    return _result(np.ascontiguousarray(out), (x, kernel, bias), backward)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2.

    The gradient goes to the first maximum in row-major order of each window.
    """
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects (B, C, H, W), got {x.shape}")
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"maxpool2d needs even spatial dims, got {H}x{W}")
    quads = [x.data[:, :, i::2, j::2] for i in (0, 1) for j in (0, 1)]  # row-major scan order
    out = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))

    def backward(g):
        dx = np.zeros_like(x.data)
        taken = np.zeros(out.shape, dtype=bool)
        for (i, j), q in zip(((0, 0), (0, 1), (1, 0), (1, 1)), quads):
            hit = (q == out) & ~taken
            taken |= hit
            dx[:, :, i::2, j::2] = np.where(hit, g, 0)
        return (dx,)

    return _result(out, (x,), backward)


def upsample2d(x: Tensor, factor: int = 2) -> Tensor:
    """Nearest-neighbour upsampling by an integer factor."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"upsample factor must be a positive integer, got {factor!r}")
    if x.ndim != 4:
        raise ShapeError(f"upsample2d expects (B, C, H, W), got {x.shape}")
    if factor == 1:
        return _result(x.data.copy(), (x,), lambda g: (g,))
    B, C, H, W = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def backward(g):
        return (g.reshape(B, C, H, factor, W, factor).sum(axis=(3, 5)),)

    return _result(out, (x,), backward)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight.T + bias`` with ``weight`` shaped ``(d_out, d_in)``."""
    if x.ndim != 2 or weight.ndim != 2:
        raise ShapeError(f"dense expects 2-d input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense inner dimension mismatch: {x.shape[1]} vs {weight.shape[1]}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"dense bias shape {bias.shape} != ({weight.shape[0]},)")
    out = x.data @ weight.data.T + bias.data

    def backward(g):
        dx = g @ weight.data if x.requires_grad else None
        dw = g.T @ x.data if weight.requires_grad else None
        db = g.sum(axis=0) if bias.requires_grad else None
        return dx, dw, db

    return _result(out, (x, weight, bias), backward)


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return _result(np.maximum(x.data, 0), (x,), lambda g: (g * positive,))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, shifted by the row maximum."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _result(p, (x,), backward)


def linear(x: Tensor) -> Tensor:
    return x


ACTIVATIONS = {"relu": relu, "softmax": softmax, "linear": linear}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        return ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-p)`` so eval is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))
