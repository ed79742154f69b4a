"""Paired synthetic corpus on disk.

Layout::

    DIR/manifest.txt          one line per pair: ``name split``
    DIR/gt/<name>.png         normal-light image
    DIR/low/<name>.png        degraded counterpart
    DIR/bundles/<name>_low/   modalities of the low-light image (model input)
    DIR/bundles/<name>_gt/    modalities of the ground truth (reconstruction targets)
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

import numpy as np

from .bundle import BundleError, ImagePair, load_bundle, save_bundle
from .extractors import extract_bundle
from .synth import degrade, procedural_image, quantize8, read_png, sample_params, write_png

MANIFEST = "manifest.txt"


def generate_corpus(
    out,
    count: int,
    size: tuple[int, int],
    seed: int,
    severity: str = "med",
    val_fraction: float = 0.25,
) -> list[ImagePair]:
    h, w = size
    if h % 8 or w % 8:
        raise ValueError(f"image size {h}x{w} must be divisible by 8")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    n_val = min(count - 1, int(math.ceil(count * val_fraction))) if val_fraction > 0 and count > 1 else 0
    seqs = np.random.SeedSequence(seed).spawn(count)
    pairs, lines = [], []
    for i, ss in enumerate(seqs):
        rng = np.random.default_rng(ss)
        name = f"{i:04d}"
        gt = quantize8(procedural_image(h, w, rng))
        params = sample_params(severity, rng)
        low = quantize8(degrade(gt, params, seed=int(rng.integers(2**31))))
        split = "val" if i >= count - n_val else "train"
        write_png(out / "gt" / f"{name}.png", gt)
        write_png(out / "low" / f"{name}.png", low)
        b_low, b_gt = extract_bundle(low, seed), extract_bundle(gt, seed)
        save_bundle(b_low, out / "bundles" / f"{name}_low")
        save_bundle(b_gt, out / "bundles" / f"{name}_gt")
        pairs.append(ImagePair(low, gt, b_low, b_gt, name=name, split=split))
        lines.append(f"{name} {split}")
    (out / MANIFEST).write_text("\n".join(lines) + "\n")
    return pairs


def load_corpus(path, split: Optional[str] = None) -> list[ImagePair]:
    """Load pairs listed in the manifest; ``split=None`` loads all of them."""
    path = Path(path)
    manifest = path / MANIFEST
    if not manifest.exists():
        raise BundleError(f"no corpus manifest in {path}")
    pairs = []
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        name, sp = line.split()
        if split is not None and sp != split:
            continue
        gt = read_png(path / "gt" / f"{name}.png")
        low = read_png(path / "low" / f"{name}.png")
        b_low = load_bundle(path / "bundles" / f"{name}_low", expect_hw=gt.shape[:2])
        b_gt = load_bundle(path / "bundles" / f"{name}_gt", expect_hw=gt.shape[:2])
        pairs.append(ImagePair(low, gt, b_low, b_gt, name=name, split=sp))
    if not pairs:
        raise BundleError(f"corpus {path} has no pairs" + (f" in split {split!r}" if split else ""))
    return pairs
