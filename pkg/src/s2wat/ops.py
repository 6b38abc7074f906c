"""Differentiable tensor operations.

Each op computes its forward result with numpy and registers a backward
closure through :func:`s2wat.tensor.make_node`.  Python scalars are kept
as weakly-typed numbers so float32 graphs stay float32.
"""

from __future__ import annotations

import builtins
from numbers import Number
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, UnsupportedPaddingError
from .tensor import Tensor, _report_flops, as_tensor, branch, make_node

GELU_SQRT_2_OVER_PI = 0.7978845608
GELU_CUBIC = 0.044715


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise arithmetic -------------------------------------------------

def add(a, b) -> Tensor:
    if isinstance(b, Number):
        a, b = as_tensor(a), float(b)
        return make_node(a.data + b, (a,), lambda g: (g,))
    if isinstance(a, Number):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    if isinstance(b, Number):
        return add(a, -b)
    if isinstance(a, Number):
        return add(neg(b), a)
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_node(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    if isinstance(b, Number):
        a, b = as_tensor(a), float(b)
        return make_node(a.data * b, (a,), lambda g: (g * b,))
    if isinstance(a, Number):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data * b.data, (a, b),
                     lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    if isinstance(b, Number):
        return mul(a, 1.0 / b)
    if isinstance(a, Number):
        b = as_tensor(b)
        out = a / b.data
        return make_node(out, (b,), lambda g: (-g * out / b.data,))
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return make_node(out, (a, b),
                     lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** exponent
    return make_node(out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return make_node(out, (a,), lambda g: (g * 0.5 / out,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = branch(x.data > 0)
    return make_node(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * mask,))


def gelu(x) -> Tensor:
    """Tanh approximation: 0.5 x (1 + tanh(0.7978845608 (x + 0.044715 x^3)))."""
    x = as_tensor(x)
    xd = x.data
    inner = GELU_SQRT_2_OVER_PI * (xd + GELU_CUBIC * xd ** 3)
    t = np.tanh(inner)
    out = 0.5 * xd * (1.0 + t)

    def backward(g):
        dinner = GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * xd ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * dinner),)

    return make_node(out.astype(xd.dtype, copy=False), (x,), backward)


# -- reductions and shape manipulation ----------------------------------------

def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return make_node(np.asarray(out, dtype=x.dtype), (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def swap_last(x) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def getitem(x, key) -> Tensor:
    x = as_tensor(x)

    parts = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(k, (builtins.slice, int)) or k is Ellipsis or k is None for k in parts)

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[key] = g
        else:
            np.add.at(full, key, g)
        return (full,)

    return make_node(x.data[key], (x,), backward)


def take(x, indices: np.ndarray, axis: int) -> Tensor:
    """Gather along ``axis``; repeated indices accumulate in the backward pass."""
    x = as_tensor(x)
    indices = np.asarray(indices)
    axis = axis % x.ndim
    flat = indices.reshape(-1)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(np.moveaxis(full, axis, 0), flat, np.moveaxis(g, axis, 0))
        return (full,)

    node = make_node(np.take(x.data, flat, axis=axis), (x,), backward)
    if indices.ndim != 1:
        node = reshape(node, x.shape[:axis] + indices.shape + x.shape[axis + 1:])
    return node


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                     lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim
    return make_node(out, tensors,
                     lambda g: tuple(np.take(g, i, axis=ax) for i in range(len(tensors))))


# -- linear algebra ------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product ``[..., m, k] @ [..., k, p]``.

    Adds m*k*p multiplications per broadcast batch element to any active
    flop counter.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    try:
        batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as exc:
        raise DimensionError(f"matmul batch extents not broadcastable: {a.shape} @ {b.shape}") from exc
    m, k = a.shape[-2:]
    p = b.shape[-1]
    _report_flops("matmul", int(np.prod(batch, dtype=np.int64)) * m * k * p)
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return make_node(out, (a, b), backward)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    x = as_tensor(x)
    if x.ndim == 1:
        out = reshape(matmul(reshape(x, (1, -1)), weight), (-1,))
    else:
        out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# -- normalization ------------------------------------------------------------

def softmax_lastdim(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError("softmax over an empty last dimension")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_node(out, (x,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last (channel) dimension, then apply ``gamma * x + beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"layer_norm affine extents {gamma.shape}/{beta.shape} != ({c},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gx = g * gamma.data
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_node(out, (x, gamma, beta), backward)


# -- spatial ops ----------------------------------------------------------------

def reflect_indices(n: int, before: int, after: int) -> np.ndarray:
    """Source indices for mirror-without-edge padding of an axis of length ``n``."""
    if before < 0 or after < 0:
        raise UnsupportedPaddingError("negative pad count")
    if before >= n or after >= n:
        raise UnsupportedPaddingError(
            f"reflection pad ({before}, {after}) needs extent > pad, got extent {n}")
    return np.pad(np.arange(n), (before, after), mode="reflect")


def reflect_pad(x, pads: dict) -> Tensor:
    """Reflect-pad the axes given as ``{axis: (before, after)}``."""
    x = as_tensor(x)
    for axis, (before, after) in pads.items():
        if before == 0 and after == 0:
            continue
        x = take(x, reflect_indices(x.shape[axis], before, after), axis=axis)
    return x


def reflect_pad_2d(x, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Reflect-pad the two trailing spatial axes of a ``[..., H, W]`` tensor."""
    x = as_tensor(x)
    return reflect_pad(x, {x.ndim - 2: (top, bottom), x.ndim - 1: (left, right)})


def crop_2d(x, top: int, bottom: int, left: int, right: int) -> Tensor:
    x = as_tensor(x)
    h, w = x.shape[-2:]
    return getitem(x, (Ellipsis, builtins.slice(top, h - bottom), builtins.slice(left, w - right)))


def conv2d(x, weight, bias=None) -> Tensor:
    """Valid stride-1 cross-correlation of ``[..., Cin, H, W]`` with ``[Cout, Cin, kh, kw]``.

    Callers reflect-pad beforehand when the spatial size must be kept.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    cout, cin, kh, kw = weight.shape
    if x.ndim < 3 or x.shape[-3] != cin:
        raise DimensionError(f"conv2d input {x.shape} does not have {cin} channels")
    h, w = x.shape[-2:]
    if kh > h or kw > w:
        raise DimensionError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    ho, wo = h - kh + 1, w - kw + 1
    lead = x.shape[:-3]
    _report_flops("conv2d", int(np.prod(lead, dtype=np.int64)) * cout * cin * kh * kw * ho * wo)
    cols = sliding_window_view(x.data, (kh, kw), axis=(-2, -1))  # [..., cin, ho, wo, kh, kw]
    nl = len(lead)
    out = np.tensordot(cols, weight.data, axes=([nl, nl + 3, nl + 4], [1, 2, 3]))  # [..., ho, wo, cout]
    out = np.moveaxis(out, -1, -3)

    def backward(g):
        g_last = np.moveaxis(g, -3, -1)  # [..., ho, wo, cout]
        lead_axes = list(range(nl))
        gw = np.tensordot(g_last, cols, axes=(lead_axes + [nl, nl + 1], lead_axes + [nl + 1, nl + 2]))
        # gw: [cout, cin, kh, kw]
        dcols = np.tensordot(g_last, weight.data, axes=([nl + 2], [0]))  # [..., ho, wo, cin, kh, kw]
        gx = np.zeros_like(x.data)
        for a in range(kh):
            for b in range(kw):
                gx[..., :, a:a + ho, b:b + wo] += np.moveaxis(dcols[..., a, b], -1, -3)
        return gx, gw.astype(weight.dtype, copy=False)

    node = make_node(np.ascontiguousarray(out), (x, weight), backward)
    if bias is not None:
        bias = as_tensor(bias)
        node = add(node, reshape(bias, (cout, 1, 1)))
    return node


def upsample_nearest2(x) -> Tensor:
    """Double the two trailing spatial extents by pixel replication."""
    x = as_tensor(x)
    out = np.repeat(np.repeat(x.data, 2, axis=-2), 2, axis=-1)
    h, w = x.shape[-2:]

    def backward(g):
        return (g.reshape(g.shape[:-2] + (h, 2, w, 2)).sum(axis=(-3, -1)),)

    return make_node(out, (x,), backward)


def max_pool2(x) -> Tensor:
    """2x2 stride-2 max pooling over the trailing axes; odd edges are dropped."""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    ho, wo = h // 2, w // 2
    if ho == 0 or wo == 0:
        raise DimensionError(f"max_pool2 needs extents >= 2, got {h}x{w}")
    trimmed = x.data[..., : 2 * ho, : 2 * wo]
    blocks = trimmed.reshape(x.shape[:-2] + (ho, 2, wo, 2))
    blocks = np.moveaxis(blocks, -3, -2).reshape(x.shape[:-2] + (ho, wo, 4))
    arg = branch(blocks.argmax(axis=-1))
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        onehot = (np.arange(4) == arg[..., None]) * g[..., None]
        onehot = onehot.reshape(x.shape[:-2] + (ho, wo, 2, 2))
        onehot = np.moveaxis(onehot, -2, -3).reshape(x.shape[:-2] + (2 * ho, 2 * wo))
        full = np.zeros_like(x.data)
        full[..., : 2 * ho, : 2 * wo] = onehot
        return (full,)

    return make_node(out, (x,), backward)
