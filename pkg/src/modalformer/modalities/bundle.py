"""Modality bundles, image pairs, and their on-disk manifest format."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..autograd import mft

NAMES = (
    "clip_embed",
    "imagebind_embed",
    "dinov2_embed",
    "sam_instances",
    "sam_edges",
    "surface_normals",
    "depth_map",
    "color_palette",
    "luminance",
)
CHANNELS = {name: (1 if name == "luminance" else 22) for name in NAMES}

# modality groups used by the leave-one-group-out ablation
GROUPS = {
    "feature_embeddings": ("clip_embed", "imagebind_embed", "dinov2_embed"),
    "segmentation": ("sam_instances", "sam_edges"),
    "geometry": ("surface_normals", "depth_map"),
    "color": ("color_palette", "luminance"),
}

MANIFEST = "manifest.txt"


class BundleError(ValueError):
    pass


@dataclass
class ModalityBundle:
    """The nine auxiliary maps of one image, keyed by modality name."""

    maps: dict[str, np.ndarray]
    source: str = "synthetic"

    def __post_init__(self):
        missing = [n for n in NAMES if n not in self.maps]
        if missing:
            raise BundleError(f"bundle is missing modality {missing[0]!r}")
        self.maps = {n: self.maps[n] for n in NAMES}
        hw = self.maps[NAMES[0]].shape[:2]
        for n, m in self.maps.items():
            if m.ndim != 3 or m.shape[-1] != CHANNELS[n]:
                raise BundleError(f"modality {n!r} has shape {m.shape}, expected H x W x {CHANNELS[n]}")
            if m.shape[:2] != hw:
                raise BundleError(f"modality {n!r} is {m.shape[:2]}, others are {hw}")

    @property
    def hw(self) -> tuple[int, int]:
        return self.maps[NAMES[0]].shape[:2]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.maps[name]

    def as_list(self, names=NAMES) -> list[np.ndarray]:
        return [self.maps[n] for n in names]

    def map_arrays(self, fn) -> "ModalityBundle":
        return ModalityBundle({n: fn(m) for n, m in self.maps.items()}, self.source)


@dataclass
class ImagePair:
    low: np.ndarray
    gt: np.ndarray
    bundle_low: ModalityBundle
    bundle_gt: ModalityBundle
    name: str = ""
    split: str = "train"

    def __post_init__(self):
        hw = self.gt.shape[:2]
        if self.low.shape != self.gt.shape or self.low.shape[-1] != 3:
            raise BundleError(f"low {self.low.shape} and gt {self.gt.shape} must both be H x W x 3")
        if self.bundle_low.hw != hw or self.bundle_gt.hw != hw:
            raise BundleError(f"bundles do not match image size {hw}")


def save_bundle(bundle: ModalityBundle, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, m in bundle.maps.items():
        fname = f"{name}.mft"
        mft.save(path / fname, m)
        lines.append(f"{name} {m.shape[-1]} {fname}")
    (path / MANIFEST).write_text("\n".join(lines) + "\n")


def load_bundle(path, expect_hw: Optional[tuple[int, int]] = None) -> ModalityBundle:
    path = Path(path)
    manifest = path / MANIFEST
    if not manifest.exists():
        raise BundleError(f"no manifest in {path}")
    entries = {}
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        name, channels, fname = line.split()
        entries[name] = (int(channels), fname)
    for name in NAMES:
        if name not in entries:
            raise BundleError(f"manifest is missing modality {name!r}")
    maps = {}
    for name in NAMES:
        channels, fname = entries[name]
        f = path / fname
        if not f.exists():
            raise BundleError(f"missing file {fname} for modality {name!r}")
        arr = mft.load(f)
        if arr.ndim != 3 or arr.shape[-1] != channels:
            raise BundleError(f"modality {name!r}: file has shape {arr.shape}, manifest says {channels} channels")
        if channels != CHANNELS[name]:
            raise BundleError(f"modality {name!r}: manifest says {channels} channels, expected {CHANNELS[name]}")
        maps[name] = arr
    bundle = ModalityBundle(maps, source="file")
    if expect_hw is not None and bundle.hw != tuple(expect_hw):
        raise BundleError(f"bundle is {bundle.hw}, expected {tuple(expect_hw)}")
    return bundle
