"""Patch sampling with paired dihedral augmentation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..modalities.bundle import ImagePair


@dataclass
class Sample:
    low: np.ndarray
    gt: np.ndarray
    maps_low: dict[str, np.ndarray]
    maps_gt: dict[str, np.ndarray]


def dihedral(x: np.ndarray, e: int) -> np.ndarray:
    """Element e of D4 on the two leading axes: rotate by e % 4 quarter turns, then mirror if e >= 4."""
    y = np.rot90(x, k=e % 4, axes=(0, 1))
    if e >= 4:
        y = y[:, ::-1]
    return np.ascontiguousarray(y)


def dihedral_inverse(x: np.ndarray, e: int) -> np.ndarray:
    if e >= 4:
        x = x[:, ::-1]
    return np.ascontiguousarray(np.rot90(x, k=-(e % 4), axes=(0, 1)))


def crop_and_augment(pair: ImagePair, top: int, left: int, size: int, e: int) -> Sample:
    def f(a):
        return dihedral(a[top:top + size, left:left + size], e)

    return Sample(
        f(pair.low),
        f(pair.gt),
        {n: f(m) for n, m in pair.bundle_low.maps.items()},
        {n: f(m) for n, m in pair.bundle_gt.maps.items()},
    )


def sample_batch(dataset: Sequence[ImagePair], batch: int, patch: int, augment: bool, rng: np.random.Generator) -> list[Sample]:
    if not dataset:
        raise ValueError("empty dataset")
    out = []
    for _ in range(batch):
        pair = dataset[int(rng.integers(len(dataset)))]
        h, w = pair.gt.shape[:2]
        if patch > min(h, w):
            raise ValueError(f"image {pair.name} is {h}x{w}, smaller than patch {patch}")
        top = int(rng.integers(h - patch + 1))
        left = int(rng.integers(w - patch + 1))
        e = int(rng.integers(8)) if augment else 0
        out.append(crop_and_augment(pair, top, left, patch, e))
    return out
