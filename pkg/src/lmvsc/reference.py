"""Dense, small-scale oracles for testing.

Nothing here is used by the clustering pipeline. Each function takes a
deliberately different arithmetic route from the production code it is
compared against (full n x n matrices, plain projected gradient, loops).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import Embedding, fix_signs
from .errors import DimensionMismatch, RankDeficient, SizeGuard

MAX_DENSE_N = 5000
MAX_QP_M = 200


@dataclass(frozen=True)
class DenseSimilarity:
    S: np.ndarray


def dense_similarity(graphs) -> DenseSimilarity:
    """Average of the per-view ``Zhat Zhat^T``."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one graph")
    n = graphs[0].Zhat.shape[0]
    if n > MAX_DENSE_N:
        raise SizeGuard(f"n={n} exceeds the dense oracle limit of {MAX_DENSE_N}")
    S = np.zeros((n, n))
    for g in graphs:
        if g.Zhat.shape[0] != n:
            raise DimensionMismatch("graphs disagree on n")
        zh = g.Zhat
        # explicit per-anchor outer products rather than one matrix product
        for j in range(zh.shape[1]):
            S += np.outer(zh[:, j], zh[:, j])
    S /= len(graphs)
    return DenseSimilarity(S)


def dense_spectral_embed(s: DenseSimilarity, k) -> Embedding:
    """Top-``k`` eigenvectors of the full similarity matrix."""
    S = s.S
    n = S.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    w, U = np.linalg.eigh(S)
    w, U = w[::-1], U[:, ::-1]
    rank = int(np.sum(w > 1e-12))
    if rank < k:
        raise RankDeficient(f"numerical rank {rank} < k={k}", rank=rank)
    Q = fix_signs(U[:, :k].copy())
    nxt = w[k] if k < n else 0.0
    sv = np.sqrt(np.maximum(w[:k], 0.0))
    return Embedding(Q, sv, float(w[k - 1] - max(nxt, 0.0)))


@dataclass
class DenseQpResult:
    z: np.ndarray
    objective: float
    n_iters: int
    last_change: float


def _project_simplex_loop(v):
    # Held/Wolfe/Crowder threshold search written as a plain loop
    u = sorted(v, reverse=True)
    total = 0.0
    theta = 0.0
    for i, ui in enumerate(u, start=1):
        total += ui
        t = (total - 1.0) / i
        if ui - t > 0:
            theta = t
    return np.maximum(v - theta, 0.0)


def dense_qp_solve(x, anchors, alpha, tol=1e-14, max_iters=100000, return_result=False):
    """Plain projected gradient with step 1/L on the per-sample problem.

    Stops once the objective changes by at most ``tol`` between iterations.
    ``anchors`` is an ``AnchorSet`` or a ``(d, m)`` array.
    """
    A = getattr(anchors, "anchors", anchors)
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    m = A.shape[1]
    if m > MAX_QP_M:
        raise SizeGuard(f"m={m} exceeds the dense QP oracle limit of {MAX_QP_M}")
    H = A.T @ A + alpha * np.eye(m)
    h = A.T @ x
    L = 2.0 * np.linalg.eigvalsh(H)[-1]

    def f(z):
        r = x - A @ z
        return float(r @ r + alpha * z @ z)

    z = np.full(m, 1.0 / m)
    fz = f(z)
    change = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        z_new = _project_simplex_loop(z - (2.0 * (H @ z - h)) / L)
        f_new = f(z_new)
        change = abs(fz - f_new)
        z, fz = z_new, f_new
        if change <= tol:
            break
    if return_result:
        return DenseQpResult(z, fz, it, change)
    return z


def subspace_distance(Q1, Q2, ortho_tol=1e-6) -> float:
    """Frobenius distance between the orthogonal projectors onto span(Q1), span(Q2)."""
    Q1 = np.asarray(Q1, dtype=np.float64)
    Q2 = np.asarray(Q2, dtype=np.float64)
    if Q1.shape != Q2.shape:
        raise DimensionMismatch(f"shapes differ: {Q1.shape} vs {Q2.shape}")
    k = Q1.shape[1]
    for name, Q in (("Q1", Q1), ("Q2", Q2)):
        err = np.linalg.norm(Q.T @ Q - np.eye(k))
        if err > ortho_tol:
            raise ValueError(f"{name} is not orthonormal (||Q^T Q - I|| = {err:.3g})")
    return float(np.linalg.norm(Q1 @ Q1.T - Q2 @ Q2.T))
