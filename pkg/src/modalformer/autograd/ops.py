"""Differentiable operators on :class:`Tensor`.

Broadcasting is limited to identical shapes or tensor-with-scalar, where a
scalar is a Python number or a single-element tensor.
"""

from __future__ import annotations

import builtins
import contextvars
import math
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import erf

from .tensor import ShapeError, Tensor, make_result

Operand = Union[Tensor, float, int]

_FLOPS: contextvars.ContextVar[Optional["FlopCounter"]] = contextvars.ContextVar("flops", default=None)


class FlopCounter:
    """Tally multiply-add FLOPs (2 per MAC) of every matmul run inside the block."""

    def __init__(self):
        self.flops = 0
        self._token = None

    def __enter__(self):
        self._token = _FLOPS.set(self)
        return self

    def __exit__(self, *exc):
        _FLOPS.reset(self._token)


def as_tensor(x: Operand, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _is_scalar(t: Tensor) -> bool:
    return t.size == 1


def _check_binary(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _unbroadcast(g: np.ndarray, t: Tensor) -> np.ndarray:
    if g.shape == t.shape:
        return g
    return np.asarray(g.sum()).reshape(t.shape).astype(t.dtype)


# -- elementwise -----------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _check_binary("add", a, b)
    data = _bshape(a.data + b.data, a, b)
    return make_result("add", data, (a, b), lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _check_binary("sub", a, b)
    data = _bshape(a.data - b.data, a, b)
    return make_result("sub", data, (a, b), lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _check_binary("mul", a, b)
    data = _bshape(a.data * b.data, a, b)
    return make_result(
        "mul", data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a), _unbroadcast(g * a.data, b)),
    )


def div(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _check_binary("div", a, b)
    data = _bshape(a.data / b.data, a, b)

    def vjp(g):
        ga = g / b.data
        return _unbroadcast(ga, a), _unbroadcast(-ga * a.data / b.data, b)

    return make_result("div", data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return make_result("scale", a.data * a.dtype.type(s), (a,), lambda g: (g * g.dtype.type(s),))


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    data = a.data ** p
    return make_result("power", data, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def abs(a: Tensor) -> Tensor:  # noqa: A001
    return make_result("abs", np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def clamp_min(a: Tensor, lo: float) -> Tensor:
    mask = a.data > lo
    data = np.where(mask, a.data, a.dtype.type(lo))
    return make_result("clamp_min", data, (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))
    return make_result("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def gelu(a: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return make_result("gelu", (x * cdf).astype(x.dtype), (a,), lambda g: ((g * (cdf + x * pdf)).astype(x.dtype),))


def _pair(a: Operand, b: Operand) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, a)
    b = as_tensor(b)
    return as_tensor(a, b), b


def _bshape(data: np.ndarray, a: Tensor, b: Tensor) -> np.ndarray:
    # scalar tensors may be shape () or (1,...); result follows the non-scalar side
    target = b.shape if _is_scalar(a) and not _is_scalar(b) else a.shape
    return data.reshape(target)


# -- linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading batch axes must match."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    data = a.data @ b.data
    counter = _FLOPS.get()
    if counter is not None:
        batch = int(np.prod(a.shape[:-2], dtype=np.int64)) if a.ndim > 2 else 1
        counter.flops += 2 * batch * a.shape[-2] * a.shape[-1] * b.shape[-1]

    def vjp(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return make_result("matmul", data, (a, b), vjp)


# -- shape manipulation ------------------------------------------------------

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    data = a.data.reshape(tuple(shape))
    return make_result("reshape", data, (a,), lambda g: (g.reshape(a.shape),), check=False)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    data = np.transpose(a.data, axes)  # a view; matmul takes strided operands as they are
    return make_result("transpose", data, (a,), lambda g: (np.transpose(g, inv),), check=False)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    ref = tensors[0]
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or t.shape[:ax] + t.shape[ax + 1:] != ref.shape[:ax] + ref.shape[ax + 1:]:
            raise ShapeError(f"concat: incompatible shapes {ref.shape} and {t.shape} on axis {axis}")
    data = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    return make_result("concat", data, tensors, lambda g: tuple(np.split(g, bounds, axis=ax)), check=False)


def split(a: Tensor, sections: Union[int, Sequence[int]], axis: int = -1) -> list[Tensor]:
    """Split into equal ``sections`` parts, or parts of the listed sizes."""
    ax = axis % a.ndim
    n = a.shape[ax]
    if isinstance(sections, int):
        if n % sections:
            raise ShapeError(f"split: axis size {n} not divisible by {sections}")
        sizes = [n // sections] * sections
    else:
        sizes = list(sections)
        if builtins.sum(sizes) != n:
            raise ShapeError(f"split: sizes {sizes} do not sum to {n}")
    outs, start = [], 0
    for s in sizes:
        idx = [slice(None)] * a.ndim
        idx[ax] = slice(start, start + s)
        outs.append(getitem(a, tuple(idx)))
        start += s
    return outs


def getitem(a: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing."""
    data = np.array(a.data[index])  # copy; keeps 0-d picks 0-d

    def vjp(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return make_result("getitem", data, (a,), vjp, check=False)


def pad_reflect(a: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Reflect-pad the bottom/right of an H x W x C tensor (no gradient needed at eval)."""
    data = np.pad(a.data, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect")
    h, w = a.shape[:2]
    return make_result("pad_reflect", data, (a,), lambda g: (_unpad_reflect(g, h, w),))


def _unpad_reflect(g: np.ndarray, h: int, w: int) -> np.ndarray:
    out = g[:h, :w].copy()
    ph, pw = g.shape[0] - h, g.shape[1] - w
    for i in range(ph):
        out[h - 2 - i] += g[h + i, :w]
    for j in range(pw):
        out[:, w - 2 - j] += g[:h, w + j]
    for i in range(ph):
        for j in range(pw):
            out[h - 2 - i, w - 2 - j] += g[h + i, w + j]
    return out


# -- reductions ----------------------------------------------------------------

def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    data = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return make_result("sum", data, (a,), vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def sum_tensors(tensors: Sequence[Tensor]) -> Tensor:
    out = tensors[0]
    for t in tensors[1:]:
        out = add(out, t)
    return out


# -- normalisation / attention primitives ----------------------------------------

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for rank {a.ndim}")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return make_result("softmax", y, (a,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last (channel) axis per token, then apply gain and bias."""
    c = x.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"layer_norm: channel mismatch x{x.shape} gain{gain.shape} bias{bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data
    red = tuple(range(x.ndim - 1))

    def vjp(g):
        gx = g * gain.data
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return make_result("layer_norm", data.astype(x.dtype), (x, gain, bias), vjp)
