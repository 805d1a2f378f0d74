"""Small seeded k-means used by the spectral baseline and the streaming baseline."""

from __future__ import annotations

import numpy as np


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 100):
    k = centers.shape[0]
    labels = np.zeros(x.shape[0], dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for c in range(k):
            members = x[labels == c]
            if members.size:
                centers[c] = members.mean(axis=0)
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = d2[np.arange(x.shape[0]), labels].sum()
    return labels, centers, inertia


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator, restarts: int = 10):
    """Lloyd iterations from ``restarts`` random initializations; best inertia wins."""
    x = np.asarray(x, dtype=float)
    best = None
    for _ in range(restarts):
        if x.shape[0] >= k:
            init = x[rng.choice(x.shape[0], size=k, replace=False)].copy()
        else:
            init = x[rng.integers(0, x.shape[0], size=k)].copy()
        labels, centers, inertia = _lloyd(x, init)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    return best
