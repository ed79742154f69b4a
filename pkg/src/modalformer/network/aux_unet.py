"""Four-level convolutional U-Net that reconstructs one modality map.

Levels sit at H, H/2, H/4 and H/8 with C, 2C, 4C and 8C channels. The
encoder features of the first three levels and the decoder features at the
same resolutions are exposed as taps for injection into the transformer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autograd import ShapeError, Tensor, ops
from .layers import Conv, Deconv, Module

LEVELS = 4


@dataclass
class Taps:
    enc: tuple[Tensor, Tensor, Tensor]
    dec: tuple[Tensor, Tensor, Tensor]


class AuxUNet(Module):
    def __init__(self, c_raw: int, c: int, rng: np.random.Generator):
        self.c_raw = c_raw
        widths = [c * 2**i for i in range(LEVELS)]
        self.lift = Conv(c_raw, c, 3, rng)
        self.down = [Conv(widths[i], widths[i + 1], 3, rng, stride=2) for i in range(LEVELS - 1)]
        self.up = [Deconv(widths[i + 1], widths[i], rng) for i in range(LEVELS - 1)]
        self.fuse = [Conv(2 * widths[i], widths[i], 3, rng) for i in range(LEVELS - 1)]
        self.head = Conv(c, c_raw, 1, rng)

    def __call__(self, m: Tensor) -> tuple[Tensor, Taps]:
        h, w, cr = m.shape
        if h % 8 or w % 8:
            raise ShapeError(f"auxiliary U-Net needs H, W divisible by 8, got {h}x{w}")
        if cr != self.c_raw:
            raise ShapeError(f"auxiliary U-Net expects {self.c_raw} channels, got {cr}")
        enc = [ops.gelu(self.lift(m))]
        for down in self.down:
            enc.append(ops.gelu(down(enc[-1])))
        x = enc[-1]
        dec = [None] * (LEVELS - 1)
        for i in reversed(range(LEVELS - 1)):
            x = ops.gelu(self.up[i](x))
            x = ops.gelu(self.fuse[i](ops.concat([x, enc[i]], axis=-1)))
            dec[i] = x
        return self.head(x), Taps(tuple(enc[:3]), tuple(dec))


def aux_unet_forward(m_j: Tensor, params: AuxUNet) -> tuple[Tensor, Taps]:
    return params(m_j)
