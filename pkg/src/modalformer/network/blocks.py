"""Feed-forward network and the multimodal transformer block."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .. import attention  # module import: attention itself imports network.layers
from ..autograd import ShapeError, Tensor, ops
from .layers import Conv, LayerNorm, Module

FFN_EXPANSION = 4


class FFN(Module):
    """1x1 expand (GELU) -> 3x3 (GELU) -> 1x1 compress."""

    def __init__(self, c: int, rng: np.random.Generator, mu: int = FFN_EXPANSION):
        self.channels = c
        self.expand = Conv(c, mu * c, 1, rng)
        self.depth = Conv(mu * c, mu * c, 3, rng)
        self.compress = Conv(mu * c, c, 1, rng)

    def __call__(self, f: Tensor) -> Tensor:
        if f.shape[-1] != self.channels:
            raise ShapeError(f"FFN expects {self.channels} channels, got {f.shape[-1]}")
        return self.compress(ops.gelu(self.depth(ops.gelu(self.expand(f)))))


def ffn_forward(f: Tensor, params: FFN) -> Tensor:
    return params(f)


class MMTB(Module):
    """F' = F + LN(attn(F, mods)); out = F' + LN(FFN(F')). Norms act on branch outputs."""

    def __init__(self, c: int, heads: int, rng: np.random.Generator, mode: str = "cm_msa", n_modalities: int = 9):
        self.attn = attention.CMMSA(c, heads, rng, mode=mode, n_modalities=n_modalities)
        self.ln1 = LayerNorm(c)
        self.ffn = FFN(c, rng)
        self.ln2 = LayerNorm(c)

    def __call__(self, f_in: Tensor, f_mod: Optional[Sequence[Tensor]] = None) -> Tensor:
        f = ops.add(f_in, self.ln1(self.attn(f_in, f_mod)))
        return ops.add(f, self.ln2(self.ffn(f)))


def mmtb_forward(f_in: Tensor, f_mod: Optional[Sequence[Tensor]], params: MMTB) -> Tensor:
    return params(f_in, f_mod)
