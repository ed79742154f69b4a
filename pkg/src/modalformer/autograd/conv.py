"""2-D convolution and its stride-2 adjoint on channels-last (H, W, C) maps.

Cross-correlation convention, zero padding. Weights are laid out
``(kh, kw, C_in, C_out)`` for :func:`conv2d`; :func:`transposed_conv2d`
takes the weight of the conv it inverts, i.e. ``(kh, kw, C_out, C_in)``
relative to its own input/output, so one array can be shared between the
pair.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .tensor import ShapeError, Tensor, make_result


def _geometry(n: int, k: int, stride: int, pad: str) -> tuple[int, int, int]:
    """Output size and (before, after) zero padding along one axis."""
    if pad == "valid":
        return (n - k) // stride + 1, 0, 0
    if pad != "same":
        raise ValueError(f"unknown padding {pad!r}")
    out = -(-n // stride)
    total = max((out - 1) * stride + k - n, 0)
    return out, total // 2, total - total // 2


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    c = xp.shape[-1]
    cols = np.empty((ho, wo, kh, kw, c), dtype=xp.dtype)
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[i:i + hs:stride, j:j + ws:stride]
    return cols.reshape(ho * wo, kh * kw * c)


def _col2im(cols: np.ndarray, padded_shape, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    c = padded_shape[-1]
    cols = cols.reshape(ho, wo, kh, kw, c)
    out = np.zeros(padded_shape, dtype=cols.dtype)
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            out[i:i + hs:stride, j:j + ws:stride] += cols[:, :, i, j]
    return out


class _Plan:
    """Padding/geometry of a conv mapping an (H, W) grid to (ho, wo)."""

    def __init__(self, h: int, w: int, kh: int, kw: int, stride: int, pad: str):
        self.ho, self.pt, self.pb = _geometry(h, kh, stride, pad)
        self.wo, self.pl, self.pr = _geometry(w, kw, stride, pad)
        if self.ho <= 0 or self.wo <= 0:
            raise ShapeError(f"conv2d: non-positive output size for input {h}x{w}, kernel {kh}x{kw}")
        self.h, self.w, self.kh, self.kw, self.stride = h, w, kh, kw, stride

    def pad(self, x: np.ndarray) -> np.ndarray:
        if self.pt == self.pb == self.pl == self.pr == 0:
            return x
        return np.pad(x, ((self.pt, self.pb), (self.pl, self.pr), (0, 0)))

    def padded_shape(self, c: int) -> tuple[int, int, int]:
        return self.h + self.pt + self.pb, self.w + self.pl + self.pr, c

    def crop(self, xp: np.ndarray) -> np.ndarray:
        return xp[self.pt:self.pt + self.h, self.pl:self.pl + self.w]

    def cols(self, x: np.ndarray) -> np.ndarray:
        if self.kh == self.kw == self.stride == 1:
            return x.reshape(-1, x.shape[-1])
        return _im2col(self.pad(x), self.kh, self.kw, self.stride, self.ho, self.wo)

    def uncols(self, cols: np.ndarray, c: int) -> np.ndarray:
        if self.kh == self.kw == self.stride == 1:
            return cols.reshape(self.h, self.w, c)
        return self.crop(_col2im(cols, self.padded_shape(c), self.kh, self.kw, self.stride, self.ho, self.wo))


def _check(x: Tensor, w: Tensor, bias: Optional[Tensor], cin_axis: int, cout_axis: int, name: str) -> None:
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeError(f"{name}: expected x (H,W,C) and w (kh,kw,Cin,Cout), got {x.shape} and {w.shape}")
    kh, kw = w.shape[:2]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"{name}: kernel size must be odd, got {kh}x{kw}")
    if x.shape[-1] != w.shape[cin_axis]:
        raise ShapeError(f"{name}: channel mismatch, input has {x.shape[-1]} channels, weight expects {w.shape[cin_axis]}")
    if bias is not None and bias.shape != (w.shape[cout_axis],):
        raise ShapeError(f"{name}: bias shape {bias.shape} does not match {w.shape[cout_axis]} output channels")


def conv2d(x: Tensor, w: Tensor, bias: Optional[Tensor] = None, stride: int = 1, pad: str = "same") -> Tensor:
    """``x`` (H, W, Cin) * ``w`` (kh, kw, Cin, Cout) -> (H', W', Cout)."""
    _check(x, w, bias, 2, 3, "conv2d")
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    kh, kw, cin, cout = w.shape
    plan = _Plan(x.shape[0], x.shape[1], kh, kw, stride, pad)
    cols = plan.cols(x.data)
    wmat = w.data.reshape(-1, cout)
    out = cols @ wmat
    if bias is not None:
        out += bias.data
    out = out.reshape(plan.ho, plan.wo, cout)

    def vjp(g):
        g2 = g.reshape(-1, cout)
        dx = plan.uncols(g2 @ wmat.T, cin)
        dw = (cols.T @ g2).reshape(w.shape)
        return (dx, dw) if bias is None else (dx, dw, g2.sum(axis=0))

    inputs = (x, w) if bias is None else (x, w, bias)
    return make_result("conv2d", out, inputs, vjp)


def transposed_conv2d(x: Tensor, w: Tensor, bias: Optional[Tensor] = None, stride: int = 2) -> Tensor:
    """Adjoint of a stride-2 same-padded :func:`conv2d`: (h, w, Cin) -> (2h, 2w, Cout).

    ``w`` has shape (kh, kw, Cout, Cin): exactly the weight of the forward
    conv from Cout to Cin channels that this op transposes.
    """
    _check(x, w, bias, 3, 2, "transposed_conv2d")
    if stride != 2:
        raise ValueError("transposed_conv2d supports stride 2 only")
    kh, kw, cout, cin = w.shape
    h, wd = x.shape[:2]
    plan = _Plan(2 * h, 2 * wd, kh, kw, stride, "same")
    wmat = w.data.reshape(-1, cin)
    xmat = x.data.reshape(-1, cin)
    out = plan.uncols(xmat @ wmat.T, cout)
    if bias is not None:
        out = out + bias.data

    def vjp(g):
        gcols = plan.cols(g)
        dx = (gcols @ wmat).reshape(x.shape)
        dw = (gcols.T @ xmat).reshape(w.shape)
        return (dx, dw) if bias is None else (dx, dw, g.reshape(-1, cout).sum(axis=0))

    inputs = (x, w) if bias is None else (x, w, bias)
    return make_result("transposed_conv2d", out, inputs, vjp)
