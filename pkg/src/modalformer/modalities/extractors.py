"""Deterministic stand-ins for the nine auxiliary modality extractors.

Every extractor is a pure function of (image, seed) returning an
H x W x 22 map in [0, 1] (luminance is H x W x 1). Channel layouts:

=================  ==========================================================
embedding (x3)     22 random projections of 7x7 RGB patches, tanh-squashed
sam_instances      one-hot class (8) | class mean colour (3) | zeros (11)
sam_edges          Sobel magnitude (1) | magnitude >= 0.1 .. 0.9 (9) | zeros (12)
surface_normals    remapped unit normal (3) | zeros (19)
depth_map          depth (1) | 0.5 +/- 0.5 sin/cos(pi f depth), f=1..10 (20) | zeros (1)
color_palette      nearest palette colour (3) | one-hot index (5) | palette (14)
luminance          NTSC luma (1)
=================  ==========================================================
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np
from scipy import ndimage

from .bundle import CHANNELS, NAMES, ModalityBundle
from .kmeans import assign, kmeans

NTSC = np.array([0.299, 0.587, 0.114])
N_CH = 22
PALETTE_K = 5
SEGMENT_K = 8
EDGE_THRESHOLDS = np.round(np.arange(1, 10) * 0.1, 1)
DEPTH_FREQS = np.arange(1, 11)
DEPTH_SIGMA = 2.0
PATCH = 7
SPATIAL_WEIGHT = 0.5

EMBEDDINGS = ("clip_embed", "imagebind_embed", "dinov2_embed")


def _pad_channels(maps: np.ndarray, n: int = N_CH) -> np.ndarray:
    h, w, c = maps.shape
    if c > n:
        return maps[..., :n]
    out = np.zeros((h, w, n), dtype=np.float64)
    out[..., :c] = maps
    return out


def _check_rgb(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {rgb.shape}")
    return rgb


def ntsc_luminance(rgb: np.ndarray) -> np.ndarray:
    """0.299 R + 0.587 G + 0.114 B per pixel, shape H x W x 1."""
    rgb = _check_rgb(rgb)
    return (rgb @ NTSC)[..., None]


def palette_modality(rgb: np.ndarray, seed: int, k: int = PALETTE_K) -> np.ndarray:
    rgb = _check_rgb(rgb)
    h, w, _ = rgb.shape
    pixels = rgb.reshape(-1, 3)
    centroids, labels = kmeans(pixels, k, seed)
    # dominant colour first; stable sort keeps index order among equal counts
    counts = np.bincount(labels, minlength=k)
    order = np.argsort(-counts, kind="stable")
    centroids = centroids[order]
    labels = assign(pixels, centroids)
    nearest = centroids[labels]
    onehot = np.eye(k)[labels]
    broadcast = np.broadcast_to(centroids.reshape(-1), (h * w, 3 * k))
    out = np.concatenate([nearest, onehot, broadcast], axis=1)[:, :N_CH]
    return np.clip(out, 0.0, 1.0).reshape(h, w, N_CH)


def segments_modality(rgb: np.ndarray, seed: int, k: int = SEGMENT_K) -> np.ndarray:
    """Pixel classes from k-means on colour + position, merged by colour.

    Clusters whose mean colours agree to 1e-3 are one class, so a uniformly
    coloured region is a single label however k-means tiles it spatially.
    """
    rgb = _check_rgb(rgb)
    h, w, _ = rgb.shape
    ys, xs = np.mgrid[0:h, 0:w]
    feats = np.concatenate(
        [rgb.reshape(-1, 3), SPATIAL_WEIGHT * np.stack([xs.ravel() / w, ys.ravel() / h], axis=1)], axis=1
    )
    _, labels = kmeans(feats, k, seed)
    pixels = rgb.reshape(-1, 3)
    present, first = np.unique(labels, return_index=True)
    class_colors: list[np.ndarray] = []
    cluster_class = np.zeros(k, dtype=np.int64)
    for c in present[np.argsort(first)]:  # raster order of first appearance fixes numbering
        color = pixels[labels == c].mean(axis=0)
        for n, other in enumerate(class_colors):
            if np.abs(color - other).max() < 1e-3:
                cluster_class[c] = n
                break
        else:
            cluster_class[c] = len(class_colors)
            class_colors.append(color)
    classes = cluster_class[labels]
    means = np.zeros((len(class_colors), 3))
    for n in range(len(class_colors)):
        means[n] = pixels[classes == n].mean(axis=0)
    out = np.concatenate([np.eye(k)[classes], means[classes]], axis=1)
    return _pad_channels(out.reshape(h, w, -1))


def sobel_magnitude(lum: np.ndarray) -> np.ndarray:
    img = np.asarray(lum, dtype=np.float64)[..., 0]
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    return np.hypot(gx, gy)


def edges_modality(lum: np.ndarray) -> np.ndarray:
    mag = sobel_magnitude(lum)
    peak = mag.max()
    norm = mag / peak if peak > 1e-6 else np.zeros_like(mag)
    binary = (norm[..., None] >= EDGE_THRESHOLDS - 1e-12).astype(np.float64)
    return _pad_channels(np.concatenate([norm[..., None], binary], axis=-1))


def pseudo_depth(lum: np.ndarray) -> np.ndarray:
    img = np.asarray(lum, dtype=np.float64)[..., 0]
    return ndimage.gaussian_filter(1.0 - img, sigma=DEPTH_SIGMA, mode="nearest")


def unit_normals(depth: np.ndarray) -> np.ndarray:
    """Unit (-dd/du, -dd/dv, 1) with u, v the image coordinates scaled to [0, 1]."""
    h, w = depth.shape
    ddx = np.gradient(depth, 1.0 / max(w - 1, 1), axis=1) if w > 1 else np.zeros_like(depth)
    ddy = np.gradient(depth, 1.0 / max(h - 1, 1), axis=0) if h > 1 else np.zeros_like(depth)
    n = np.stack([-ddx, -ddy, np.ones_like(depth)], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def depth_normals_modalities(lum: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.clip(pseudo_depth(lum), 0.0, 1.0)
    enc = [d[..., None]]
    for f in DEPTH_FREQS:
        enc.append(0.5 + 0.5 * np.sin(np.pi * f * d)[..., None])
        enc.append(0.5 + 0.5 * np.cos(np.pi * f * d)[..., None])
    depth = _pad_channels(np.concatenate(enc, axis=-1))
    normals = _pad_channels((unit_normals(d) + 1.0) / 2.0)
    return depth, normals


def projection_matrix(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dim = PATCH * PATCH * 3
    return rng.standard_normal((dim, N_CH)) * (2.0 / np.sqrt(dim))


def embedding_modality(rgb: np.ndarray, seed: int) -> np.ndarray:
    rgb = _check_rgb(rgb)
    h, w, _ = rgb.shape
    r = PATCH // 2
    padded = np.pad(rgb - 0.5, ((r, r), (r, r), (0, 0)), mode="reflect" if min(h, w) > r else "edge")
    patches = np.lib.stride_tricks.sliding_window_view(padded, (PATCH, PATCH), axis=(0, 1))
    # (h, w, 3, 7, 7) -> (h, w, 7, 7, 3) so the patch vector is row-major RGB
    vecs = patches.transpose(0, 1, 3, 4, 2).reshape(h * w, -1)
    z = np.tanh(vecs @ projection_matrix(seed))
    return ((z + 1.0) / 2.0).reshape(h, w, N_CH)


def extractor_seed(seed: int, name: str) -> int:
    idx = NAMES.index(name)
    return int(np.random.SeedSequence([seed, idx]).generate_state(1)[0])


def extract_bundle(rgb: np.ndarray, seed: int = 0, workers: int = 1) -> ModalityBundle:
    """Run all nine extractors on ``rgb``; ``workers > 1`` runs them in threads."""
    rgb = _check_rgb(rgb)
    lum = ntsc_luminance(rgb)
    jobs: dict[str, Callable[[], object]] = {
        name: (lambda n=name: embedding_modality(rgb, extractor_seed(seed, n))) for name in EMBEDDINGS
    }
    jobs["sam_instances"] = lambda: segments_modality(rgb, extractor_seed(seed, "sam_instances"))
    jobs["sam_edges"] = lambda: edges_modality(lum)
    jobs["geometry"] = lambda: depth_normals_modalities(lum)
    jobs["color_palette"] = lambda: palette_modality(rgb, extractor_seed(seed, "color_palette"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {k: pool.submit(fn) for k, fn in jobs.items()}
            results = {k: f.result() for k, f in futures.items()}
    else:
        results = {k: fn() for k, fn in jobs.items()}
    depth, normals = results.pop("geometry")
    results["depth_map"] = depth
    results["surface_normals"] = normals
    results["luminance"] = lum
    maps = {name: results[name].astype(np.float32) for name in NAMES}
    for name in NAMES:
        assert maps[name].shape[-1] == CHANNELS[name]
    return ModalityBundle(maps, source="synthetic")
