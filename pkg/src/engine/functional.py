"""Primitivas diferenciáveis sobre ``Tensor``.

Cada função calcula a saída com numpy e devolve um tensor cujo
``_backward`` produz os gradientes exatos de cada pai.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor

Axis = Union[None, int, Sequence[int]]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# ---------------------------------------------------------------------- #
#  Elementwise                                                           #
# ---------------------------------------------------------------------- #


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._from_op(a.data / b.data, (a, b), backward, "div")


def neg(x) -> Tensor:
    x = as_tensor(x)
    return Tensor._from_op(-x.data, (x,), lambda g: (-g,), "neg")


def scale(x, factor: float) -> Tensor:
    x = as_tensor(x)
    return Tensor._from_op(x.data * factor, (x,), lambda g: (g * factor,), "scale")


def square(x) -> Tensor:
    x = as_tensor(x)
    return Tensor._from_op(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def silu(x) -> Tensor:
    x = as_tensor(x)
    sig = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g):
        return (g * sig * (1.0 + x.data * (1.0 - sig)),)

    return Tensor._from_op(x.data * sig, (x,), backward, "silu")


# ---------------------------------------------------------------------- #
#  Reduções e forma                                                      #
# ---------------------------------------------------------------------- #


def sum(x, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(x.data.sum(axis=axes, keepdims=keepdims), (x,), backward, "sum")


def mean(x, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scale(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


def mse_loss(prediction, target) -> Tensor:
    prediction, target = as_tensor(prediction), as_tensor(target)
    if prediction.shape != target.shape:
        raise ShapeError("mse_loss", prediction.shape, target.shape)
    return mean(square(sub(prediction, target)))


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeError("transpose", x.shape, axes, detail="axes must permute every dimension")
    inverse = tuple(np.argsort([a % x.ndim for a in axes]))
    return Tensor._from_op(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),), "transpose")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    reference = tensors[0].shape
    axis = axis % len(reference)
    for t in tensors[1:]:
        if t.ndim != len(reference) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, reference)) if i != axis
        ):
            raise ShapeError("concat", reference, t.shape)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def getitem(x, index) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return Tensor._from_op(x.data[index], (x,), backward, "getitem")


def embedding(table, indices: np.ndarray) -> Tensor:
    table = as_tensor(table)
    indices = np.asarray(indices, dtype=np.int64)

    def backward(g):
        out = np.zeros_like(table.data)
        np.add.at(out, indices, g)
        return (out,)

    return Tensor._from_op(table.data[indices], (table,), backward, "embedding")


# ---------------------------------------------------------------------- #
#  Álgebra linear                                                        #
# ---------------------------------------------------------------------- #


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return Tensor._from_op(out, (a, b), backward, "matmul")


def bmm(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0]:
        raise ShapeError("bmm", a.shape, b.shape)
    return matmul(a, b)


def linear(x, weight, bias=None) -> Tensor:
    weight = as_tensor(weight)
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError("linear", x.shape, weight.shape)
    out = matmul(x, transpose(weight, (1, 0)))
    return add(out, bias) if bias is not None else out


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    y = exp / exp.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(y, (x,), backward, "softmax")


def group_norm(x, groups: int, weight=None, bias=None, eps: float = 1e-5) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 3:
        raise ShapeError("group_norm", x.shape, detail="expected (B, C, *spatial)")
    batch, channels = x.shape[:2]
    if channels % groups:
        raise ShapeError("group_norm", x.shape, (groups,), detail="channels not divisible by groups")
    param_shape = (1, channels) + (1,) * (x.ndim - 2)
    reduce_axes = (0,) + tuple(range(2, x.ndim))

    grouped = x.data.reshape(batch, groups, -1)
    mu = grouped.mean(axis=-1, keepdims=True)
    var = grouped.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (grouped - mu) * inv_std
    x_hat_full = x_hat.reshape(x.shape)

    parents: Tuple[Tensor, ...] = (x,)
    out = x_hat_full
    gamma = None
    if weight is not None:
        weight, bias = as_tensor(weight), as_tensor(bias)
        if weight.shape != (channels,) or bias.shape != (channels,):
            raise ShapeError("group_norm", x.shape, weight.shape, bias.shape)
        gamma = weight.data.reshape(param_shape)
        out = x_hat_full * gamma + bias.data.reshape(param_shape)
        parents = (x, weight, bias)

    def backward(g):
        g_hat = g * gamma if gamma is not None else g
        g_hat = g_hat.reshape(batch, groups, -1)
        gx = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        grads = [gx.reshape(x.shape)]
        if gamma is not None:
            grads.append((g * x_hat_full).sum(axis=reduce_axes))
            grads.append(g.sum(axis=reduce_axes))
        return tuple(grads)

    return Tensor._from_op(out, parents, backward, "group_norm")


# ---------------------------------------------------------------------- #
#  Convoluções                                                           #
# ---------------------------------------------------------------------- #


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Convolução 2D direta (im2col por janelas deslizantes, sem FFT).

    x: (B, C_in, H, W), weight: (C_out, C_in, kH, kW) -> (B, C_out, H_out, W_out)
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv2d", x.shape, weight.shape)
    _, _, height, width = x.shape
    kh, kw = weight.shape[2:]
    pad = int(padding)
    step = int(stride)
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    if padded.shape[2] < kh or padded.shape[3] < kw:
        raise ShapeError("conv2d", x.shape, weight.shape, detail="kernel larger than padded input")
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::step, ::step]
    out_h, out_w = windows.shape[2:4]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    parents: Tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, -1, 1, 1)
        parents = (x, weight, bias)

    def backward(g):
        gx = None
        if x.requires_grad:
            g_padded = np.zeros_like(padded)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0]))
                    g_padded[:, :, i : i + step * out_h : step, j : j + step * out_w : step] += contrib.transpose(
                        0, 3, 1, 2
                    )
            gx = g_padded[:, :, pad : pad + height, pad : pad + width] if pad else g_padded
        gw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return Tensor._from_op(out, parents, backward, "conv2d")


def conv3d(x, weight, bias=None, padding: int = 0) -> Tensor:
    """Convolução 3D de passo 1. x: (B, C_in, D, H, W), weight: (C_out, C_in, kD, kH, kW)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 5 or weight.ndim != 5 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv3d", x.shape, weight.shape)
    _, _, depth, height, width = x.shape
    kd, kh, kw = weight.shape[2:]
    pad = int(padding)
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad))) if pad else x.data
    if padded.shape[2] < kd or padded.shape[3] < kh or padded.shape[4] < kw:
        raise ShapeError("conv3d", x.shape, weight.shape, detail="kernel larger than padded input")
    windows = sliding_window_view(padded, (kd, kh, kw), axis=(2, 3, 4))
    out_d, out_h, out_w = windows.shape[2:5]
    out = np.tensordot(windows, weight.data, axes=([1, 5, 6, 7], [1, 2, 3, 4])).transpose(0, 4, 1, 2, 3)
    parents: Tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, -1, 1, 1, 1)
        parents = (x, weight, bias)

    def backward(g):
        gx = None
        if x.requires_grad:
            g_padded = np.zeros_like(padded)
            for a in range(kd):
                for i in range(kh):
                    for j in range(kw):
                        contrib = np.tensordot(g, weight.data[:, :, a, i, j], axes=([1], [0]))
                        g_padded[:, :, a : a + out_d, i : i + out_h, j : j + out_w] += contrib.transpose(
                            0, 4, 1, 2, 3
                        )
            gx = (
                g_padded[:, :, pad : pad + depth, pad : pad + height, pad : pad + width]
                if pad
                else g_padded
            )
        gw = np.tensordot(g, windows, axes=([0, 2, 3, 4], [0, 2, 3, 4])) if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3, 4)))
        return tuple(grads)

    return Tensor._from_op(out, parents, backward, "conv3d")


def upsample_nearest2d(x, factor: int = 2) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("upsample_nearest2d", x.shape, detail="expected (B, C, H, W)")
    batch, channels, height, width = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(g):
        return (g.reshape(batch, channels, height, factor, width, factor).sum(axis=(3, 5)),)

    return Tensor._from_op(out, (x,), backward, "upsample_nearest2d")
