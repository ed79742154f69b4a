"""The cross-modal transformer (three-level U-shape) plus its auxiliary U-Nets.

Level l runs at H/2^l with C*2^l channels and heads[l] attention heads.
Encoder blocks receive the auxiliary encoder taps of their level, decoder
blocks the decoder taps, and the bottleneck blocks the sum of both taps at
H/4. Modalities not listed in ``ModelConfig.modalities`` have no subnet and
are never read.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from .. import attention
from ..autograd import ShapeError, Tensor, no_record, ops
from ..modalities.bundle import CHANNELS, NAMES, ModalityBundle
from .aux_unet import AuxUNet
from .blocks import MMTB
from .layers import Conv, Deconv, Module

BLOCKS = {"enc0": 1, "enc1": 2, "bottleneck": 2, "dec1": 2, "dec0": 1}


@dataclass
class ModelConfig:
    base_channels: int = 16
    heads: tuple[int, int, int] = (1, 2, 4)
    mode: str = "cm_msa"
    modalities: tuple[str, ...] = field(default_factory=lambda: tuple(NAMES))
    seed: int = 0

    def __post_init__(self):
        self.heads = tuple(self.heads)
        self.modalities = tuple(self.modalities)
        if self.mode not in attention.MODES:
            raise ValueError(f"unknown attention mode {self.mode!r}")
        unknown = [m for m in self.modalities if m not in CHANNELS]
        if unknown:
            raise ValueError(f"unknown modalities {unknown}")
        if self.mode != attention.BASELINE_MODE and not self.modalities:
            raise ValueError(f"mode {self.mode} needs at least one modality")
        for lvl, k in enumerate(self.heads):
            if (self.base_channels * 2**lvl) % k:
                raise ValueError(f"heads {k} do not divide level-{lvl} width {self.base_channels * 2**lvl}")

    @property
    def active(self) -> tuple[str, ...]:
        """Modalities that get a subnet, in canonical order."""
        if self.mode == attention.BASELINE_MODE:
            return ()
        return tuple(n for n in NAMES if n in self.modalities)

    def to_dict(self) -> dict:
        return asdict(self)


class ModalFormer(Module):
    def __init__(self, config: ModelConfig):
        self.config = config
        c, (k0, k1, k2) = config.base_channels, config.heads
        rng = np.random.default_rng(config.seed)
        n = len(config.active)
        mode = config.mode

        def blocks(width, heads, count):
            return [MMTB(width, heads, rng, mode=mode, n_modalities=n) for _ in range(count)]

        self.lift = Conv(3, c, 1, rng)
        self.enc0 = blocks(c, k0, BLOCKS["enc0"])
        self.down1 = Conv(c, 2 * c, 3, rng, stride=2)
        self.enc1 = blocks(2 * c, k1, BLOCKS["enc1"])
        self.down2 = Conv(2 * c, 4 * c, 3, rng, stride=2)
        self.bottleneck = blocks(4 * c, k2, BLOCKS["bottleneck"])
        self.up2 = Deconv(4 * c, 2 * c, rng)
        self.reduce1 = Conv(4 * c, 2 * c, 1, rng)
        self.dec1 = blocks(2 * c, k1, BLOCKS["dec1"])
        self.up1 = Deconv(2 * c, c, rng)
        self.reduce0 = Conv(2 * c, c, 1, rng)
        self.dec0 = blocks(c, k0, BLOCKS["dec0"])
        self.head = Conv(c, 3, 1, rng)
        self.aux = [AuxUNet(CHANNELS[name], c, rng) for name in config.active]

    def __call__(self, i: Tensor, maps: Mapping[str, Tensor]) -> tuple[Tensor, dict[str, Tensor]]:
        h, w, ch = i.shape
        if ch != 3:
            raise ShapeError(f"input: expected 3 channels, got {ch}")
        if h % 8 or w % 8:
            raise ShapeError(f"input: H and W must be divisible by 8, got {h}x{w}")
        m_hat, taps = {}, []
        for name, net in zip(self.config.active, self.aux):
            if name not in maps:
                raise ShapeError(f"bundle: missing modality {name}")
            if maps[name].shape[:2] != (h, w):
                raise ShapeError(f"bundle: {name} is {maps[name].shape[:2]}, image is {(h, w)}")
            m_hat[name], t = net(maps[name])
            taps.append(t)

        enc = [[t.enc[lvl] for t in taps] for lvl in range(3)]
        dec = [[t.dec[lvl] for t in taps] for lvl in range(3)]
        mid = [ops.add(a, b) for a, b in zip(enc[2], dec[2])]

        x0 = _run(self.enc0, self.lift(i), enc[0])
        x1 = _run(self.enc1, self.down1(x0), enc[1])
        x = _run(self.bottleneck, self.down2(x1), mid)
        x = self.reduce1(ops.concat([self.up2(x), x1], axis=-1))
        x = _run(self.dec1, x, dec[1])
        x = self.reduce0(ops.concat([self.up1(x), x0], axis=-1))
        x = _run(self.dec0, x, dec[0])
        return ops.add(self.head(x), i), m_hat


def _run(blocks: list[MMTB], x: Tensor, mods: list[Tensor]) -> Tensor:
    for b in blocks:
        x = b(x, mods)
    return x


BundleLike = Union[ModalityBundle, Mapping[str, np.ndarray], Mapping[str, Tensor]]


def as_tensors(maps: BundleLike, dtype=np.float32) -> dict[str, Tensor]:
    src = maps.maps if isinstance(maps, ModalityBundle) else maps
    return {k: v if isinstance(v, Tensor) else Tensor(v, dtype=dtype) for k, v in src.items()}


def modalformer_forward(i: Tensor, bundle: BundleLike, params: ModalFormer) -> tuple[Tensor, dict[str, Tensor]]:
    return params(i, as_tensors(bundle, i.dtype))


def enhance(model: ModalFormer, low: np.ndarray, bundle: BundleLike) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Inference: no tape, output clipped to [0, 1]."""
    dtype = model.parameters()[0].dtype
    with no_record():
        i_hat, m_hat = model(Tensor(low, dtype=dtype), as_tensors(bundle, dtype))
    return np.clip(i_hat.data, 0.0, 1.0), {k: v.data for k, v in m_hat.items()}


def build(config: Optional[ModelConfig] = None, **kw) -> ModalFormer:
    return ModalFormer(config or ModelConfig(**kw))
