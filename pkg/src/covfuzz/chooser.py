"""Seed-batch selection: uniform without replacement, or cluster-then-sample.

Batches never contain duplicate indices because the same mutation sequence
is applied to every image of a batch. Clustered mode runs Lloyd's algorithm
on flattened pixels with farthest-point initialization; inputs appended to
the test set later are assigned to their nearest centroid instead of
refitting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import defaults
from .errors import ConfigError


@dataclass
class BatchSelection:
    indices: np.ndarray
    images: np.ndarray
    labels: np.ndarray | None
    chooser: str
    cluster: int | None = None


def choose_random(images: np.ndarray, labels, batch_size: int,
                  rng: np.random.Generator) -> BatchSelection:
    """Uniform sample without replacement; the whole set if it is smaller."""
    if batch_size <= 0:
        raise ConfigError(f"batch size must be positive, got {batch_size}")
    n = len(images)
    if n == 0:
        raise ConfigError("cannot choose from an empty test set")
    size = min(batch_size, n)
    indices = np.sort(rng.choice(n, size=size, replace=False))
    return BatchSelection(
        indices=indices,
        images=images[indices],
        labels=None if labels is None else labels[indices],
        chooser="random",
    )


def _flatten(images: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(images, dtype=np.float64).reshape(len(images), -1)


def _squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (N, k) pairwise squared Euclidean distances
    x2 = (x * x).sum(axis=1)[:, None]
    c2 = (centroids * centroids).sum(axis=1)[None, :]
    d2 = x2 + c2 - 2.0 * (x @ centroids.T)
    return np.maximum(d2, 0.0)


def _farthest_point_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[int(rng.integers(len(x)))]
    min_d2 = _squared_distances(x, centroids[:1])[:, 0]
    for j in range(1, k):
        centroids[j] = x[int(np.argmax(min_d2))]
        min_d2 = np.minimum(min_d2, _squared_distances(x, centroids[j : j + 1])[:, 0])
    return centroids


@dataclass
class KMeansState:
    centroids: np.ndarray
    assignment: np.ndarray
    objective_history: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    def cluster_indices(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)

    def assign_new(self, images: np.ndarray) -> np.ndarray:
        """Nearest-centroid labels for inputs appended after the fit."""
        d2 = _squared_distances(_flatten(images), self.centroids)
        return d2.argmin(axis=1)

    def extend(self, images: np.ndarray) -> None:
        self.assignment = np.concatenate([self.assignment, self.assign_new(images)])


def kmeans_fit(images: np.ndarray, k: int, rng: np.random.Generator,
               max_iter: int = defaults.KMEANS_MAX_ITER,
               tol: float = defaults.KMEANS_TOL) -> KMeansState:
    """Lloyd's iterations on flattened pixels.

    Empty clusters are re-seeded from the point farthest from its assigned
    centroid, so every cluster ends non-empty. The recorded objective (sum of
    squared distances to assigned centroids) is non-increasing.
    """
    n = len(images)
    if not 1 <= k <= n:
        raise ConfigError(f"need 1 <= k <= {n}, got k={k}")
    x = _flatten(images)
    centroids = _farthest_point_init(x, k, rng)
    history: list[float] = []
    assignment = None
    for _ in range(max_iter):
        d2 = _squared_distances(x, centroids)
        assignment = d2.argmin(axis=1)
        # Re-seed empty clusters from the worst-served point.
        for _ in range(k):
            counts = np.bincount(assignment, minlength=k)
            empty = np.flatnonzero(counts == 0)
            if len(empty) == 0:
                break
            worst = int(np.argmax(d2[np.arange(n), assignment]))
            centroids[empty[0]] = x[worst]
            d2 = _squared_distances(x, centroids)
            assignment = d2.argmin(axis=1)
        history.append(float(d2[np.arange(n), assignment].sum()))
        new_centroids = np.stack([x[assignment == j].mean(axis=0) for j in range(k)])
        movement = float(np.abs(new_centroids - centroids).max())
        centroids = new_centroids
        if movement < tol:
            break
    return KMeansState(centroids=centroids, assignment=assignment,
                       objective_history=history)


def choose_clustered(images: np.ndarray, labels, state: KMeansState, batch_size: int,
                     rng: np.random.Generator) -> BatchSelection:
    """Uniform cluster pick, then a without-replacement sample inside it.

    A cluster smaller than the batch size is returned whole.
    """
    if batch_size <= 0:
        raise ConfigError(f"batch size must be positive, got {batch_size}")
    cluster = int(rng.integers(state.k))
    members = state.cluster_indices(cluster)
    size = min(batch_size, len(members))
    picked = np.sort(rng.choice(members, size=size, replace=False))
    return BatchSelection(
        indices=picked,
        images=images[picked],
        labels=None if labels is None else labels[picked],
        chooser="clustered",
        cluster=cluster,
    )
