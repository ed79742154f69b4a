"""Seeded k-means with k-means++ seeding and a fixed iteration count."""

from __future__ import annotations

import numpy as np


def sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared euclidean distances, shape (n_points, n_centroids)."""
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[rng.integers(n)]
    closest = sq_dists(points, centroids[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every point already coincides with a centroid: duplicate the first
            centroids[c:] = centroids[0]
            break
        idx = rng.choice(n, p=closest / total)
        centroids[c] = points[idx]
        closest = np.minimum(closest, sq_dists(points, centroids[c:c + 1])[:, 0])
    return centroids


def assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin returns the lowest index on ties
    return sq_dists(points, centroids).argmin(axis=1)


def kmeans(points: np.ndarray, k: int, seed: int, iters: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from a k-means++ start. Returns (centroids, labels).

    Empty clusters keep their previous centroid, so fewer than ``k`` distinct
    points simply yields duplicate centroids that never win a tie.
    """
    points = np.asarray(points, dtype=np.float64)
    rng = np.random.default_rng(seed)
    centroids = kmeans_pp_init(points, k, rng)
    labels = assign(points, centroids)
    for _ in range(iters):
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        labels = assign(points, centroids)
    return centroids, labels
