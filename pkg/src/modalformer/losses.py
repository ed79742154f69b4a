"""Hybrid restoration loss and image-quality metrics.

    L = L_mse + alpha * L_ms_ssim + beta * L_perc + gamma * L_mm

SSIM terms use an 11x11 Gaussian window (sigma 1.5) with valid filtering on
NTSC luminance. MS-SSIM follows the usual composition: contrast-structure
means at the finer scales, full SSIM at the coarsest, each raised to its
scale weight, with 2x average pooling between scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from .autograd import ShapeError, Tensor, conv2d, no_record, ops

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2
STANDARD_SCALE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
NTSC = (0.299, 0.587, 0.114)
PSNR_CAP = 100.0
CS_FLOOR = 1e-8


def scale_weights(m: int) -> tuple[float, ...]:
    w = np.asarray(STANDARD_SCALE_WEIGHTS[:m], dtype=np.float64)
    return tuple(float(x) for x in w / w.sum())


def min_size(m: int) -> int:
    return 2 ** (m - 1) * SSIM_WINDOW


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.2
    beta: float = 0.01
    gamma: float = 0.1
    ms_ssim_scales: int = 3
    use_mse: bool = True
    use_ms_ssim: bool = True
    use_perc: bool = True
    use_mm: bool = True

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be nonnegative")
        if not 1 <= self.ms_ssim_scales <= len(STANDARD_SCALE_WEIGHTS):
            raise ValueError(f"ms_ssim_scales must be in 1..{len(STANDARD_SCALE_WEIGHTS)}")

    @property
    def scale_weights(self) -> tuple[float, ...]:
        return scale_weights(self.ms_ssim_scales)

    def fit_to(self, h: int, w: int) -> "LossWeights":
        """Largest scale count <= ms_ssim_scales that an h x w image supports."""
        m = self.ms_ssim_scales
        while m > 1 and min(h, w) < min_size(m):
            m -= 1
        if min(h, w) < min_size(m):
            raise ValueError(f"image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
        return replace(self, ms_ssim_scales=m)


@dataclass
class LossReport:
    """Per-term values (None when the term is disabled) and optional metrics."""

    l_mse: Optional[float]
    l_ms_ssim: Optional[float]
    l_perc: Optional[float]
    l_mm: Optional[float]
    l_total: float
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    ms_ssim: Optional[float] = None
    total: Optional[Tensor] = field(default=None, repr=False)

    @staticmethod
    def compose(weights: LossWeights, l_mse=None, l_ms_ssim=None, l_perc=None, l_mm=None) -> float:
        total = 0.0
        for value, w in ((l_mse, 1.0), (l_ms_ssim, weights.alpha), (l_perc, weights.beta), (l_mm, weights.gamma)):
            if value is not None:
                total += w * value
        return total

    def as_dict(self) -> dict:
        keys = ("l_mse", "l_ms_ssim", "l_perc", "l_mm", "l_total", "psnr", "ssim", "ms_ssim")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}


# -- pixel terms ------------------------------------------------------------------

def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def mse_loss(i_hat: Tensor, i_gt: Tensor) -> Tensor:
    _same_shape(i_hat, i_gt, "mse_loss")
    d = ops.sub(i_hat, i_gt)
    return ops.mean(ops.mul(d, d))


def mm_loss(m_hat: Mapping[str, Tensor], m_gt: Mapping[str, Tensor]) -> Tensor:
    """Mean over modalities of the per-modality MSE."""
    if set(m_hat) != set(m_gt):
        raise ShapeError(f"mm_loss: predicted {sorted(m_hat)} vs targets {sorted(m_gt)}")
    if not m_hat:
        raise ValueError("mm_loss: no modalities")
    terms = [mse_loss(m_hat[k], m_gt[k]) for k in m_hat]
    return ops.scale(ops.sum_tensors(terms), 1.0 / len(terms))


# -- SSIM family ----------------------------------------------------------------------

def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _window_kernel(dtype, channels: int = 5) -> Tensor:
    """Applies the Gaussian window to each of ``channels`` stacked maps independently."""
    k = np.zeros((SSIM_WINDOW, SSIM_WINDOW, channels, channels))
    win = gaussian_window()
    for c in range(channels):
        k[:, :, c, c] = win
    return Tensor(k, dtype=dtype)


def luminance(x: Tensor) -> Tensor:
    if x.ndim != 3 or x.shape[-1] not in (1, 3):
        raise ShapeError(f"expected an H x W x 3 (or x 1) image, got {x.shape}")
    if x.shape[-1] == 1:
        return x
    return conv2d(x, Tensor(np.asarray(NTSC).reshape(1, 1, 3, 1), dtype=x.dtype))


def _ssim_means(x: Tensor, y: Tensor) -> tuple[Tensor, Tensor]:
    """(mean SSIM, mean contrast-structure) of two single-channel maps."""
    stack = ops.concat([x, y, ops.mul(x, x), ops.mul(y, y), ops.mul(x, y)], axis=-1)
    f = conv2d(stack, _window_kernel(x.dtype), pad="valid")
    mx, my, exx, eyy, exy = ops.split(f, 5, axis=-1)
    mx2, my2, mxy = ops.mul(mx, mx), ops.mul(my, my), ops.mul(mx, my)
    vx, vy, cov = ops.sub(exx, mx2), ops.sub(eyy, my2), ops.sub(exy, mxy)
    cs = ops.div(ops.add(ops.scale(cov, 2.0), C2), ops.add(ops.add(vx, vy), C2))
    lum = ops.div(ops.add(ops.scale(mxy, 2.0), C1), ops.add(ops.add(mx2, my2), C1))
    return ops.mean(ops.mul(lum, cs)), ops.mean(cs)


def _pool2(x: Tensor) -> Tensor:
    h, w, c = x.shape
    x = ops.getitem(x, (slice(0, h - h % 2), slice(0, w - w % 2)))
    x = ops.reshape(x, (h // 2, 2, w // 2, 2, c))
    return ops.mean(x, axis=(1, 3))


def _check_pair(a: Tensor, b: Tensor, m: int, what: str) -> None:
    _same_shape(a, b, what)
    h, w = a.shape[:2]
    if min(h, w) < min_size(m):
        fit = m
        while fit > 1 and min(h, w) < min_size(fit):
            fit -= 1
        hint = f"; use ms_ssim_scales={fit}" if min(h, w) >= min_size(fit) else ""
        raise ValueError(f"{what}: {h}x{w} image too small for {m} scales (needs >= {min_size(m)}){hint}")


def ms_ssim_value(i_hat: Tensor, i_gt: Tensor, scales: int = 3) -> Tensor:
    _check_pair(i_hat, i_gt, scales, "ms_ssim")
    weights = scale_weights(scales)
    x, y = luminance(i_hat), luminance(i_gt)
    out = None
    for m, wm in enumerate(weights):
        s, cs = _ssim_means(x, y)
        term = s if m == scales - 1 else cs
        factor = ops.power(ops.clamp_min(term, CS_FLOOR), wm)
        out = factor if out is None else ops.mul(out, factor)
        if m < scales - 1:
            x, y = _pool2(x), _pool2(y)
    return out


def ms_ssim_loss(i_hat: Tensor, i_gt: Tensor, scales: int = 3) -> Tensor:
    return ops.sub(Tensor(1.0, dtype=i_hat.dtype), ms_ssim_value(i_hat, i_gt, scales))


def ssim_value(i_hat: Tensor, i_gt: Tensor) -> Tensor:
    _check_pair(i_hat, i_gt, 1, "ssim")
    return _ssim_means(luminance(i_hat), luminance(i_gt))[0]


# -- perceptual term ----------------------------------------------------------------

class FixedFeatureNet:
    """Frozen, seeded conv stack 3 -> 16 -> 32 -> 64 -> 64 with GELU; stride 2 in the middle two layers."""

    LAYERS = ((3, 16, 1), (16, 32, 2), (32, 64, 2), (64, 64, 1))

    def __init__(self, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.weights = []
        for cin, cout, stride in self.LAYERS:
            w = rng.normal(0.0, math.sqrt(2.0 / (9 * cin)), size=(3, 3, cin, cout))
            self.weights.append((Tensor(w, dtype=dtype), stride))

    def __call__(self, x: Tensor) -> Tensor:
        for n, (w, stride) in enumerate(self.weights):
            if w.dtype != x.dtype:
                w = Tensor(w.data, dtype=x.dtype)
            x = conv2d(x, w, stride=stride)
            if n < len(self.weights) - 1:
                x = ops.gelu(x)
        return x


def perceptual_loss(i_hat: Tensor, i_gt: Tensor, psi: FixedFeatureNet) -> Tensor:
    _same_shape(i_hat, i_gt, "perceptual_loss")
    with no_record():
        target = psi(i_gt)
    return ops.mean(ops.abs(ops.sub(psi(i_hat), target)))


# -- metrics -------------------------------------------------------------------------

def psnr(i_hat: np.ndarray, i_gt: np.ndarray, max_val: float = 1.0) -> float:
    i_hat, i_gt = np.asarray(i_hat, np.float64), np.asarray(i_gt, np.float64)
    if i_hat.shape != i_gt.shape:
        raise ShapeError(f"psnr: shape mismatch {i_hat.shape} vs {i_gt.shape}")
    mse = float(np.mean((i_hat - i_gt) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return 10.0 * math.log10(max_val**2 / mse)


def ssim(i_hat: np.ndarray, i_gt: np.ndarray) -> float:
    with no_record():
        return float(ssim_value(Tensor(i_hat, dtype=np.float64), Tensor(i_gt, dtype=np.float64)).data)


def ms_ssim(i_hat: np.ndarray, i_gt: np.ndarray, scales: int = 3) -> float:
    with no_record():
        return float(ms_ssim_value(Tensor(i_hat, dtype=np.float64), Tensor(i_gt, dtype=np.float64), scales).data)


def image_metrics(i_hat: np.ndarray, i_gt: np.ndarray, scales: int = 3) -> dict[str, float]:
    h, w = np.shape(i_gt)[:2]
    m = LossWeights(ms_ssim_scales=scales).fit_to(h, w).ms_ssim_scales
    return {"psnr": psnr(i_hat, i_gt), "ssim": ssim(i_hat, i_gt), "ms_ssim": ms_ssim(i_hat, i_gt, m)}


# -- composition ------------------------------------------------------------------

def hybrid_loss(
    i_hat: Tensor,
    i_gt: Tensor,
    m_hat: Mapping[str, Tensor],
    m_gt: Mapping[str, Tensor],
    weights: LossWeights = LossWeights(),
    psi: Optional[FixedFeatureNet] = None,
    metrics: bool = False,
) -> LossReport:
    """Weighted sum of the enabled terms. ``total`` is the differentiable scalar."""
    terms: dict[str, Tensor] = {}
    if weights.use_mse:
        terms["l_mse"] = mse_loss(i_hat, i_gt)
    if weights.use_ms_ssim:
        terms["l_ms_ssim"] = ms_ssim_loss(i_hat, i_gt, weights.ms_ssim_scales)
    if weights.use_perc:
        terms["l_perc"] = perceptual_loss(i_hat, i_gt, psi or FixedFeatureNet(dtype=i_hat.dtype))
    if weights.use_mm and m_hat:
        terms["l_mm"] = mm_loss(m_hat, m_gt)
    if not terms:
        raise ValueError("hybrid_loss: every term is disabled")
    coef = {"l_mse": 1.0, "l_ms_ssim": weights.alpha, "l_perc": weights.beta, "l_mm": weights.gamma}
    total = ops.sum_tensors([ops.scale(t, coef[k]) for k, t in terms.items()])
    values = {k: float(t.data) for k, t in terms.items()}
    report = LossReport(
        l_mse=values.get("l_mse"),
        l_ms_ssim=values.get("l_ms_ssim"),
        l_perc=values.get("l_perc"),
        l_mm=values.get("l_mm"),
        l_total=LossReport.compose(weights, **values),
        total=total,
    )
    if metrics:
        out = np.clip(i_hat.data, 0.0, 1.0)
        m = image_metrics(out, i_gt.data, weights.ms_ssim_scales)
        report.psnr, report.ssim, report.ms_ssim = m["psnr"], m["ssim"], m["ms_ssim"]
    return report
