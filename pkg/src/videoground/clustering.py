"""Seeded k-means with k-means++ initialization and best-of-restarts selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (k, dim)
    assignments: np.ndarray  # (n,) cluster index per point
    inertia: float  # sum of squared distances to assigned centroids


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape (n_points, n_centroids)."""
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)

def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new centroid drawn with probability proportional
    to its squared distance from the nearest centroid chosen so far."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    while len(chosen) < k:
        d2 = _squared_distances(points, points[chosen]).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            # All remaining mass sits on already-chosen points; fall back to uniform.
            chosen.append(int(rng.integers(n)))
            continue
        chosen.append(int(rng.choice(n, p=d2 / total)))
    return points[chosen].copy()

def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iters: int) -> tuple[np.ndarray, np.ndarray, float]:
    n, k = points.shape[0], centroids.shape[0]
    prev_inertia = np.inf
    assignments = np.zeros(n, dtype=int)
    for _ in range(max_iters):
        d2 = _squared_distances(points, centroids)
        assignments = d2.argmin(axis=1)  # ties resolve to the lowest index
        # Re-seat any emptied centroid on the point farthest from its own centroid,
        # stealing only from clusters that keep at least one member afterwards.
        for c in range(k):
            if not np.any(assignments == c):
                counts = np.bincount(assignments, minlength=k)
                dist = d2[np.arange(n), assignments]
                dist = np.where(counts[assignments] > 1, dist, -np.inf)
                worst = int(dist.argmax())
                centroids[c] = points[worst]
                assignments[worst] = c
                d2[:, c] = _squared_distances(points, centroids[c : c + 1])[:, 0]
        inertia = float(d2[np.arange(n), assignments].sum())
        for c in range(k):
            centroids[c] = points[assignments == c].mean(axis=0)
        if inertia <= 0.0:
            break
        if prev_inertia < np.inf and (prev_inertia - inertia) / max(prev_inertia, 1e-300) < 1e-10:
            break
        prev_inertia = inertia
    d2 = _squared_distances(points, centroids)
    assignments = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), assignments].sum())
    return centroids, assignments, inertia


def kmeans(points, k: int, seed: int, restarts: int = 10, max_iters: int = 100) -> KMeansResult:
    """Cluster points into k groups, keeping the best of several seeded restarts.

    Args:
        points: (n, dim) array-like of finite values, n >= k >= 1.
        k: number of clusters.
        seed: base seed; restart r uses an independent stream derived from (seed, r).
        restarts: number of independent k-means++ initializations.
        max_iters: Lloyd iteration cap per restart; iteration also stops when the
            relative inertia improvement drops below 1e-10.

    Returns:
        KMeansResult with the lowest-inertia clustering found (ties keep the
        earliest restart). Deterministic for fixed (seed, restarts).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError(f"points must be a nonempty (n, dim) array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite values")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > pts.shape[0]:
        raise ValueError(f"k={k} exceeds the number of points ({pts.shape[0]})")
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    best: KMeansResult | None = None
    for restart in range(restarts):
        rng = np.random.default_rng([int(seed), restart])
        init = _plusplus_init(pts, k, rng)
        centroids, assignments, inertia = _lloyd(pts, init.astype(float), max_iters)
        if best is None or inertia < best.inertia:
            best = KMeansResult(centroids, assignments, inertia)
    return best
