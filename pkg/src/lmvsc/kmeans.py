"""Lloyd's k-means with k-means++ seeding.

Points are rows. Restarts draw from independent child streams of one
``SeedSequence`` so restart ``r`` is the same whatever ``n_restarts`` is.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch

# relative slack for the per-iteration inertia check (rounding only)
_MONOTONE_RTOL = 1e-9


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    max_iters: int = 300
    tol: float = 1e-6
    n_restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")


@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray
    inertia: float
    n_iters: int
    labels: np.ndarray = field(repr=False, default=None)
    inertia_history: tuple = field(repr=False, default=())


def _sq_dists(points, centroids):
    return cdist(points, centroids, metric="sqeuclidean")


def _nearest(points, centroids):
    d2 = _sq_dists(points, centroids)
    lab = np.argmin(d2, axis=1)  # first minimum, i.e. lowest index on ties
    return lab, d2[np.arange(points.shape[0]), lab]


def _nearest_fast(points, sq_norms, centroids):
    # expanded form through BLAS; only used inside Lloyd, where exact inertia
    # is recomputed from differences
    d2 = sq_norms[:, None] - 2.0 * points @ centroids.T + np.sum(centroids ** 2, axis=1)
    return np.argmin(d2, axis=1)


def _cluster_sums(points, labels, k):
    n = points.shape[0]
    onehot = scipy.sparse.csr_matrix(
        (np.ones(n), (labels, np.arange(n))), shape=(k, n))
    return np.asarray(onehot @ points)


def _inertia(points, centroids, labels):
    diff = points - centroids[labels]
    # np.sum uses pairwise summation
    return float(np.sum(diff * diff))


def kmeans_plusplus(points, k, rng):
    """k-means++ seeding; every returned centroid is a copy of a data point."""
    n = points.shape[0]
    idx = [int(rng.integers(n))]
    closest = _sq_dists(points, points[idx[0]][None, :]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            p = closest / total
            nxt = int(rng.choice(n, p=p))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        closest = np.minimum(closest, _sq_dists(points, points[nxt][None, :]).ravel())
    return points[idx].copy(), np.asarray(idx)


def _lloyd(points, centroids, max_iters, tol):
    k = centroids.shape[0]
    sq_norms = np.einsum("ij,ij->i", points, points)
    labels = _nearest_fast(points, sq_norms, centroids)
    inertia = _inertia(points, centroids, labels)
    history = [inertia]
    n_iters = 0
    for it in range(max_iters):
        n_iters = it + 1
        new = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        sums = _cluster_sums(points, labels, k)
        nonempty = counts > 0
        new[nonempty] = sums[nonempty] / counts[nonempty, None]
        # empty clusters: move to the point currently worst served
        if not np.all(nonempty):
            d_own = np.sum((points - new[labels]) ** 2, axis=1)
            taken = set()
            for j in np.flatnonzero(~nonempty):
                order = np.argsort(-d_own, kind="stable")
                pick = next(int(i) for i in order if int(i) not in taken)
                taken.add(pick)
                new[j] = points[pick]
                d_own[pick] = 0.0
        new_labels = _nearest_fast(points, sq_norms, new)
        new_inertia = _inertia(points, new, new_labels)
        if new_inertia > inertia * (1 + _MONOTONE_RTOL) + 1e-300:
            raise AssertionError(
                f"k-means inertia increased at iteration {n_iters}: {inertia} -> {new_inertia}")
        history.append(new_inertia)
        unchanged = np.array_equal(new_labels, labels)
        rel = (inertia - new_inertia) / inertia if inertia > 0 else 0.0
        centroids, labels, inertia = new, new_labels, new_inertia
        if unchanged or rel <= tol:
            break
    return centroids, labels, inertia, n_iters, tuple(history)


def kmeans_fit(points, config: KMeansConfig) -> KMeansModel:
    """Best of ``config.n_restarts`` Lloyd runs, each seeded by k-means++.

    Parameters
    ----------
    points : array, shape (n, d)
    config : KMeansConfig

    Returns
    -------
    KMeansModel
        The run with the lowest inertia (earliest restart wins ties).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DimensionMismatch("points must be a 2-D array (n, d)")
    if not np.all(np.isfinite(points)):
        raise ValueError("points contain NaN or Inf")
    n = points.shape[0]
    if n < config.k:
        raise ValueError(f"cannot fit k={config.k} clusters to n={n} points")
    streams = np.random.SeedSequence(config.seed).spawn(config.n_restarts)
    best = None
    for ss in streams:
        rng = np.random.default_rng(ss)
        init, _ = kmeans_plusplus(points, config.k, rng)
        c, lab, inertia, n_iters, hist = _lloyd(points, init, config.max_iters, config.tol)
        if best is None or inertia < best.inertia:
            best = KMeansModel(c, inertia, n_iters, lab, hist)
    return best


def assign(model: KMeansModel, points) -> np.ndarray:
    """Nearest-centroid labels (squared Euclidean, ties to the lower index)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != model.centroids.shape[1]:
        raise DimensionMismatch(
            f"points have shape {points.shape}, centroids have dimension "
            f"{model.centroids.shape[1]}")
    return _nearest(points, model.centroids)[0]
