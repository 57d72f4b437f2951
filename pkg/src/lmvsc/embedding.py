"""Graph normalisation, view concatenation and the spectral embedding.

The embedding never forms an n x n matrix. With ``Zbar`` of shape
(n, p), p = m * v, the top-k left singular vectors are recovered from the
eigendecomposition of the p x p Gram matrix ``Zbar^T Zbar = V L V^T`` as
``Q = Zbar V_k L_k^{-1/2}``. These are also the top-k eigenvectors of the
averaged similarity ``Zbar Zbar^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGraph, DimensionMismatch, RankDeficient

DEGREE_EPS = 1e-12
RANK_EPS = 1e-12


@dataclass(frozen=True)
class NormalizedGraph:
    """``Zhat = Z diag(degrees)^(-1/2)`` with zero-degree anchors removed."""

    Zhat: np.ndarray
    dropped_anchors: tuple = ()
    degrees: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class ConcatGraph:
    Zbar: np.ndarray
    view_offsets: tuple

    @property
    def v(self) -> int:
        return len(self.view_offsets)


@dataclass(frozen=True)
class Embedding:
    Q: np.ndarray
    singular_values: np.ndarray
    eigengap: float


def normalize_graph(g) -> NormalizedGraph:
    """Scale each anchor column by the inverse square root of its degree."""
    Z = np.asarray(g.Z, dtype=np.float64)
    deg = Z.sum(axis=0)
    live = deg >= DEGREE_EPS
    if not live.any():
        raise DegenerateGraph("every anchor has zero degree")
    dropped = tuple(int(j) for j in np.flatnonzero(~live))
    Zhat = Z[:, live] / np.sqrt(deg[live])
    return NormalizedGraph(Zhat, dropped, deg[live])


def concat_views(graphs) -> ConcatGraph:
    """``[Zhat^1, ..., Zhat^v] / sqrt(v)``; a single view is returned unscaled."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one graph")
    n = graphs[0].Zhat.shape[0]
    for i, g in enumerate(graphs):
        if g.Zhat.shape[0] != n:
            raise DimensionMismatch(f"graph {i} has {g.Zhat.shape[0]} rows, expected {n}")
    offsets, start = [], 0
    for g in graphs:
        offsets.append((start, start + g.Zhat.shape[1]))
        start += g.Zhat.shape[1]
    if len(graphs) == 1:
        Zbar = graphs[0].Zhat
    else:
        Zbar = np.hstack([g.Zhat for g in graphs]) / np.sqrt(len(graphs))
    return ConcatGraph(Zbar, tuple(offsets))


def fix_signs(Q):
    """Make the largest-magnitude entry of every column positive (first one on ties)."""
    idx = np.argmax(np.abs(Q), axis=0)
    s = np.sign(Q[idx, np.arange(Q.shape[1])])
    s[s == 0] = 1.0
    return Q * s


def embed(zbar, k, row_normalize=False) -> Embedding:
    """Top-``k`` left singular vectors of ``Zbar`` via its Gram matrix.

    Parameters
    ----------
    zbar : ConcatGraph or array of shape (n, p)
    k : int
    row_normalize : bool
        Scale each row of ``Q`` to unit length afterwards (off by default).

    Raises
    ------
    RankDeficient
        Fewer than ``k`` Gram eigenvalues exceed ``1e-12``.
    """
    Z = zbar.Zbar if isinstance(zbar, ConcatGraph) else np.asarray(zbar, dtype=np.float64)
    n, p = Z.shape
    if not 1 <= k <= min(n, p):
        raise DimensionMismatch(f"need 1 <= k <= min(n, p) = {min(n, p)}, got k={k}")
    G = Z.T @ Z
    G = 0.5 * (G + G.T)
    w, V = np.linalg.eigh(G)
    w, V = w[::-1], V[:, ::-1]
    rank = int(np.sum(w > RANK_EPS))
    if rank < k:
        raise RankDeficient(
            f"embedding needs {k} nonzero singular values but numerical rank is {rank}",
            rank=rank)
    Q = Z @ (V[:, :k] / np.sqrt(w[:k]))
    err = np.linalg.norm(Q.T @ Q - np.eye(k))
    if err > 1e-12:
        # re-orthonormalise within the same span (Cholesky QR)
        R = np.linalg.cholesky(Q.T @ Q).T
        Q = np.linalg.solve(R.T, Q.T).T
    Q = fix_signs(Q)
    nxt = max(w[k], 0.0) if k < p else 0.0
    emb = Embedding(Q, np.sqrt(w[:k]), float(w[k - 1] - nxt))
    if row_normalize:
        norms = np.linalg.norm(Q, axis=1, keepdims=True)
        emb = Embedding(Q / np.where(norms > 0, norms, 1.0), emb.singular_values, emb.eigengap)
    return emb


def write_embedding_csv(emb: Embedding, path):
    from .dataset import atomic_write_text

    atomic_write_text(path, "".join(",".join(repr(float(x)) for x in row) + "\n" for row in emb.Q))
