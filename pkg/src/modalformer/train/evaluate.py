"""Full-image evaluation of a model on a list of pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..losses import image_metrics
from ..modalities.bundle import ImagePair
from ..network.model import ModalFormer, enhance

METRICS = ("psnr", "ssim", "ms_ssim")


@dataclass
class EvalResult:
    rows: list[dict] = field(default_factory=list)

    @property
    def mean(self) -> dict[str, float]:
        keys = [k for k in self.rows[0] if k != "name"] if self.rows else []
        return {k: float(np.mean([r[k] for r in self.rows])) for k in keys}


def pad_to_multiple(x: np.ndarray, m: int = 8) -> np.ndarray:
    h, w = x.shape[:2]
    ph, pw = -h % m, -w % m
    if ph == pw == 0:
        return x
    return np.pad(x, ((0, ph), (0, pw), (0, 0)), mode="reflect")


def enhance_full(model: ModalFormer, low: np.ndarray, maps: dict[str, np.ndarray], return_maps: bool = False):
    """Inference on a whole image; sizes not divisible by 8 are reflect-padded and cropped back.

    With ``return_maps`` the cropped modality reconstructions come back too.
    """
    h, w = low.shape[:2]
    active = model.config.active
    out, m_hat = enhance(model, pad_to_multiple(low), {n: pad_to_multiple(maps[n]) for n in active})
    if return_maps:
        return out[:h, :w], {n: m[:h, :w] for n, m in m_hat.items()}
    return out[:h, :w]


def evaluate(model: ModalFormer, pairs: Sequence[ImagePair], scales: int = 3) -> EvalResult:
    res = EvalResult()
    for p in pairs:
        out = enhance_full(model, p.low, p.bundle_low.maps)
        row = {"name": p.name, **image_metrics(out, p.gt, scales)}
        row.update({f"input_{k}": v for k, v in image_metrics(p.low, p.gt, scales).items()})
        res.rows.append(row)
    return res
