"""Synthetic low-light degradation and procedural normal-light images."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class DegradeParams:
    gamma: float = 3.0
    gain: float = 0.3
    noise_sigma: float = 0.0
    color_shift: tuple[float, float, float] = (1.0, 1.0, 1.0)


# (gamma range, gain range, noise range, max per-channel shift)
SEVERITY = {
    "low": ((2.0, 2.5), (0.35, 0.5), (0.0, 0.01), 0.03),
    "med": ((2.5, 3.5), (0.2, 0.35), (0.01, 0.03), 0.06),
    "high": ((3.5, 5.0), (0.1, 0.2), (0.03, 0.05), 0.1),
}


def sample_params(severity: str, rng: np.random.Generator) -> DegradeParams:
    if severity not in SEVERITY:
        raise ValueError(f"unknown severity {severity!r}, choose from {sorted(SEVERITY)}")
    (g0, g1), (a0, a1), (s0, s1), shift = SEVERITY[severity]
    return DegradeParams(
        gamma=float(rng.uniform(g0, g1)),
        gain=float(rng.uniform(a0, a1)),
        noise_sigma=float(rng.uniform(s0, s1)),
        color_shift=tuple(float(v) for v in 1.0 + rng.uniform(-shift, shift, size=3)),
    )


def degrade(gt: np.ndarray, params: DegradeParams, seed: int) -> np.ndarray:
    """clip(gain * gt**gamma * shift + N(0, sigma^2)) with seeded noise."""
    gt = np.asarray(gt, dtype=np.float64)
    low = params.gain * gt ** params.gamma * np.asarray(params.color_shift)
    if params.noise_sigma > 0:
        low = low + np.random.default_rng(seed).normal(0.0, params.noise_sigma, size=gt.shape)
    return np.clip(low, 0.0, 1.0)


def procedural_image(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Normal-light scene: colour gradient background, shapes and a texture."""
    ys, xs = np.mgrid[0:h, 0:w] / np.array([max(h - 1, 1), max(w - 1, 1)])[:, None, None]
    c0, c1 = rng.uniform(0.25, 0.95, size=(2, 3))
    angle = rng.uniform(0, 2 * np.pi)
    t = np.clip(0.5 + 0.5 * (np.cos(angle) * (xs - 0.5) + np.sin(angle) * (ys - 0.5)) * 1.4, 0, 1)
    img = c0 * (1 - t[..., None]) + c1 * t[..., None]
    for _ in range(int(rng.integers(2, 5))):
        color = rng.uniform(0.05, 1.0, size=3)
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        if rng.random() < 0.5:
            r = rng.uniform(0.08, 0.3)
            mask = (ys - cy) ** 2 + (xs - cx) ** 2 < r * r
        else:
            hh, hw = rng.uniform(0.06, 0.25, size=2)
            mask = (np.abs(ys - cy) < hh) & (np.abs(xs - cx) < hw)
        img[mask] = color
    freq = rng.uniform(3, 10)
    phase = rng.uniform(0, 2 * np.pi)
    stripes = 0.08 * np.sin(2 * np.pi * freq * (xs * np.cos(phase) + ys * np.sin(phase)))
    img = img + stripes[..., None] + rng.normal(0, 0.01, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def quantize8(img: np.ndarray) -> np.ndarray:
    """Round-trip through 8-bit so in-memory values equal what a PNG stores."""
    return np.round(np.clip(img, 0, 1) * 255.0) / 255.0


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def write_png(path, img: np.ndarray) -> None:
    arr = np.round(np.clip(np.asarray(img, dtype=np.float64), 0, 1) * 255.0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="RGB").save(path)
