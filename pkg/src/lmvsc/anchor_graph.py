"""Per-view anchor graphs.

The learned graph solves, independently for every sample ``x``::

    min_z  ||x - A z||^2 + alpha ||z||^2   s.t.  z >= 0, sum(z) = 1

where the columns of ``A`` are the anchors. Each row of ``Z`` is one such
``z``, so ``Z`` is row-stochastic.

The solver is accelerated projected gradient (FISTA with a function-value
restart, so the objective never increases), batched over samples. Whenever
a sample's support has stopped moving, the equality-constrained problem on
that support is solved exactly; if the result passes the KKT test the
sample is finished. In practice this finishes most samples in a few dozen
iterations even for small ``alpha``.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse
from scipy.spatial.distance import cdist

from .dataset import ViewMatrix
from .errors import ConvergenceError, DimensionMismatch
from .kmeans import KMeansConfig, kmeans_fit

# rows per batch; fixed so results do not depend on the thread count
BLOCK_ROWS = 2048

_CLAMP_TOL = 1e-12
_CHECK_EVERY = 5


@dataclass(frozen=True)
class QpSettings:
    alpha: float
    max_iters: int = 500
    kkt_tol: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.kkt_tol > 0:
            raise ValueError("kkt_tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class AnchorSet:
    """Anchors as columns, shape (d, m)."""

    anchors: np.ndarray

    def __post_init__(self):
        a = np.array(self.anchors, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] < 1:
            raise DimensionMismatch(f"anchors must be (d, m) with m >= 1, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("anchors contain NaN or Inf")
        if np.unique(a.T, axis=0).shape[0] < a.shape[1]:
            warnings.warn("anchor set contains duplicate columns", stacklevel=3)
        a.flags.writeable = False
        object.__setattr__(self, "anchors", a)

    @property
    def m(self) -> int:
        return self.anchors.shape[1]

    @property
    def d(self) -> int:
        return self.anchors.shape[0]


@dataclass(frozen=True)
class AnchorGraph:
    """Row-stochastic ``Z`` (n, m) with column sums in ``degrees``."""

    Z: np.ndarray
    degrees: np.ndarray = field(default=None)

    def __post_init__(self):
        z = np.array(self.Z, dtype=np.float64)
        if z.ndim != 2:
            raise DimensionMismatch("Z must be 2-D")
        z.flags.writeable = False
        deg = z.sum(axis=0)
        deg.flags.writeable = False
        object.__setattr__(self, "Z", z)
        object.__setattr__(self, "degrees", deg)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[1]


@dataclass
class SolveInfo:
    n_iters: int
    residual: float
    objective: float
    history: list


# ---------------------------------------------------------------------------
# simplex projection

def project_simplex_rows(V):
    """Euclidean projection of every row of ``V`` onto the probability simplex."""
    V = np.asarray(V, dtype=np.float64)
    m = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, m + 1)
    cond = U - css / ind > 0
    # last index where the condition holds
    rho = m - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), rho - 1] / rho
    return np.maximum(V - theta[:, None], 0.0)


def project_simplex(v):
    v = np.asarray(v, dtype=np.float64)
    return project_simplex_rows(v[None, :])[0]


# ---------------------------------------------------------------------------
# QP machinery

def _lipschitz(AtA, alpha):
    """Upper estimate of the largest eigenvalue of 2(A^T A + alpha I).

    Power iteration from a fixed pseudo-random start; the residual norm is
    added to the Rayleigh quotient, which bounds the distance to the
    nearest eigenvalue.
    """
    m = AtA.shape[0]
    v = np.random.default_rng(12345).standard_normal(m)
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(1000):
        w = AtA @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            rho = 0.0
            break
        rho_new = float(v @ w)
        v = w / nw
        if abs(rho_new - rho) <= 1e-12 * max(abs(rho_new), 1.0):
            rho = rho_new
            break
        rho = rho_new
    resid = float(np.linalg.norm(AtA @ v - rho * v))
    lam = min((rho + resid) * 1.01, float(np.trace(AtA)) + 1e-300) if m > 1 else rho
    lam = max(lam, rho)
    return 2.0 * (lam + alpha)


def _objective(Z, G, B, c):
    return 0.5 * np.einsum("ij,ij->i", Z @ G, Z) - np.einsum("ij,ij->i", B, Z) + c


def _kkt_residual(Z, G, B, tol):
    """Max violation of stationarity on the support and dual feasibility off it."""
    g = Z @ G - B
    lam = np.einsum("ij,ij->i", Z, g)
    red = g - lam[:, None]
    on = np.where(Z > tol, np.abs(red), 0.0).max(axis=1)
    off = np.maximum(-red, 0.0).max(axis=1)
    return np.maximum(on, off)


def _solve_on_support(G, B, S):
    """Exact minimiser of the QP restricted to ``z_j = 0`` off ``S`` (per row)."""
    r, m = S.shape
    smax = int(S.sum(axis=1).max())
    order = np.argsort(~S, axis=1, kind="stable")[:, :smax]
    valid = np.take_along_axis(S, order, axis=1)
    vf = valid.astype(np.float64)
    K = np.zeros((r, smax + 1, smax + 1))
    Gs = G[order[:, :, None], order[:, None, :]]
    mask2 = valid[:, :, None] & valid[:, None, :]
    K[:, :smax, :smax] = np.where(mask2, Gs, 0.0)
    diag = np.arange(smax)
    K[:, diag, diag] = np.where(valid, K[:, diag, diag], 1.0)
    K[:, :smax, smax] = vf
    K[:, smax, :smax] = vf
    rhs = np.zeros((r, smax + 1))
    rhs[:, :smax] = np.take_along_axis(B, order, axis=1) * vf
    rhs[:, smax] = 1.0
    sol = np.linalg.solve(K, rhs[:, :, None])[:, :, 0]
    Z = np.zeros((r, m))
    np.put_along_axis(Z, order, sol[:, :smax] * vf, axis=1)
    return Z


def _polish(Z, G, B, tol, rounds=4):
    """Guess the optimal support from ``Z`` and refine it a few times.

    Returns candidate solutions and a mask of rows whose candidate is
    feasible (within the clamp tolerance).
    """
    S = Z > 0
    cand = Z
    ok = np.zeros(Z.shape[0], dtype=bool)
    for _ in range(rounds):
        cand = _solve_on_support(G, B, S)
        neg = cand < -_CLAMP_TOL
        feasible = ~neg.any(axis=1)
        g = cand @ G - B
        lam = np.einsum("ij,ij->i", cand, g)
        red = g - lam[:, None]
        add = (~S) & (red < -tol)
        ok = feasible & ~add.any(axis=1)
        if ok.all():
            break
        # drop negative coordinates, or admit violated ones
        S = np.where(feasible[:, None], S | add, S & ~neg)
        S[~S.any(axis=1)] = Z[~S.any(axis=1)] > 0
    return cand, ok


def _clamp_rows(Z):
    if Z.size and Z.min() < -_CLAMP_TOL:
        raise AssertionError(f"solver produced a negative coefficient {Z.min()}")
    Z = np.maximum(Z, 0.0)
    return Z / Z.sum(axis=1, keepdims=True)


def _solve_batch(G, B, c, L, settings, record=False):
    """Solve many simplex QPs sharing ``G``. Returns (Z, residual, iters, history)."""
    r, m = B.shape
    tol = settings.kkt_tol
    Z = np.full((r, m), 1.0 / m)
    fZ = _objective(Z, G, B, c)
    res = _kkt_residual(Z, G, B, tol)
    iters = np.zeros(r, dtype=np.int64)
    done = res <= tol
    history = [float(fZ[0])] if record else None

    act = np.flatnonzero(~done)
    Za, Ya, fa = Z[act], Z[act].copy(), fZ[act]
    t = np.ones(act.size)
    snap = Za > 0
    it = 0
    while act.size and it < settings.max_iters:
        it += 1
        Ba, ca = B[act], c[act]
        Zn = project_simplex_rows(Ya - (Ya @ G - Ba) / L)
        fn = _objective(Zn, G, Ba, ca)
        bad = fn > fa
        if bad.any():
            # function-value restart: plain projected-gradient step from Za
            Zb, Bb, cb = Za[bad], Ba[bad], ca[bad]
            step = L
            while True:
                Zp = project_simplex_rows(Zb - (Zb @ G - Bb) / step)
                fp = _objective(Zp, G, Bb, cb)
                if np.all(fp <= fa[bad] + 1e-15 * np.abs(fa[bad])) or step > 1e6 * L:
                    break
                step *= 2.0
            # never accept an increase, whatever the step estimate did
            keep = fp > fa[bad]
            Zp[keep] = Zb[keep]
            fp[keep] = fa[bad][keep]
            Zn[bad], fn[bad] = Zp, fp
            t[bad] = 1.0
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = ((t - 1.0) / t_new)[:, None]
        Ya = Zn + beta * (Zn - Za)
        Ya[bad] = Zn[bad]
        Za, fa, t = Zn, fn, t_new

        res_a = _kkt_residual(Za, G, Ba, tol)
        fin = res_a <= tol
        if it % _CHECK_EVERY == 0:
            sup = Za > 0
            stable = np.all(sup == snap, axis=1) & ~fin
            snap = sup
            if stable.any():
                idx = np.flatnonzero(stable)
                cand, ok = _polish(Za[idx], G, Ba[idx], tol)
                if ok.any():
                    cidx = idx[ok]
                    cz = np.maximum(cand[ok], 0.0)
                    cz /= cz.sum(axis=1, keepdims=True)
                    cres = _kkt_residual(cz, G, Ba[cidx], tol)
                    cf = _objective(cz, G, Ba[cidx], ca[cidx])
                    good = (cres <= tol) & (cf <= fa[cidx] + 1e-12 * np.maximum(np.abs(fa[cidx]), 1.0))
                    gidx = cidx[good]
                    Za[gidx] = cz[good]
                    fa[gidx] = np.minimum(cf[good], fa[gidx])
                    res_a[gidx] = cres[good]
                    fin[gidx] = True
        if record and act.size and act[0] == 0:
            history.append(float(fa[0]))

        if fin.any():
            # one exact solve on the final support; kept only if it helps
            idx = np.flatnonzero(fin & (res_a > 0))
            if idx.size:
                cand, ok = _polish(Za[idx], G, Ba[idx], tol, rounds=1)
                if ok.any():
                    cidx = idx[ok]
                    cz = np.maximum(cand[ok], 0.0)
                    cz /= cz.sum(axis=1, keepdims=True)
                    cres = _kkt_residual(cz, G, Ba[cidx], tol)
                    cf = _objective(cz, G, Ba[cidx], ca[cidx])
                    good = (cres < res_a[cidx]) & (cf <= fa[cidx])
                    gidx = cidx[good]
                    Za[gidx], fa[gidx], res_a[gidx] = cz[good], cf[good], cres[good]
            ids = act[fin]
            Z[ids] = Za[fin]
            res[ids] = res_a[fin]
            iters[ids] = it
            done[ids] = True
            keep = ~fin
            act, Za, Ya, fa, t, snap = act[keep], Za[keep], Ya[keep], fa[keep], t[keep], snap[keep]
            res_a = res_a[keep]
    if act.size:
        Z[act] = Za
        res[act] = res_a
        iters[act] = it
    return Z, res, iters, done, history


def _scaled_tol(settings, G, B):
    # absolute tolerance for unit-scale data, relative for large-magnitude data
    scale = max(1.0, float(np.abs(G).max()), float(np.abs(B).max()) if B.size else 0.0)
    return QpSettings(settings.alpha, settings.max_iters, settings.kkt_tol * scale)


def _prepare(anchors: AnchorSet, alpha):
    A = anchors.anchors
    AtA = A.T @ A
    G = 2.0 * (AtA + alpha * np.eye(A.shape[1]))
    L = _lipschitz(AtA, alpha)
    return A, G, L


def solve_anchor_coeffs(x, anchors: AnchorSet, settings: QpSettings, return_info=False):
    """Coefficients of one sample on the anchors.

    Parameters
    ----------
    x : array, shape (d,)
    anchors : AnchorSet
    settings : QpSettings

    Returns
    -------
    z : array, shape (m,)
        Point of the probability simplex minimising
        ``||x - A z||^2 + alpha ||z||^2``.
    info : SolveInfo, only if ``return_info``.

    Raises
    ------
    ConvergenceError
        If the KKT residual is still above ``kkt_tol`` after ``max_iters``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != anchors.d:
        raise DimensionMismatch(f"sample has dimension {x.shape[0]}, anchors have {anchors.d}")
    A, G, L = _prepare(anchors, settings.alpha)
    B = 2.0 * (x @ A)[None, :]
    c = np.array([x @ x])
    eff = _scaled_tol(settings, G, B)
    Z, res, iters, done, hist = _solve_batch(G, B, c, L, eff, record=return_info)
    if not done[0]:
        raise ConvergenceError(
            f"QP did not reach KKT residual {eff.kkt_tol:g} in {settings.max_iters} "
            f"iterations (residual {res[0]:.3g})", residual=float(res[0]), index=0)
    z = _clamp_rows(Z)[0]
    if return_info:
        obj = float(_objective(z[None], G, B, c)[0])
        return z, SolveInfo(int(iters[0]), float(res[0]), obj, hist)
    return z


def qp_objective(z, x, anchors: AnchorSet, alpha):
    """``||x - A z||^2 + alpha ||z||^2``."""
    r = np.asarray(x, dtype=np.float64) - anchors.anchors @ z
    return float(r @ r + alpha * (z @ z))


def learn_anchor_graph(view: ViewMatrix, anchors: AnchorSet, settings: QpSettings,
                       n_jobs=1) -> AnchorGraph:
    """Solve the coefficient QP for every sample of ``view``.

    Samples are processed in fixed blocks of ``BLOCK_ROWS``; ``n_jobs``
    only changes how many blocks run at once, never the result.
    """
    if view.d != anchors.d:
        raise DimensionMismatch(f"view has {view.d} features, anchors have {anchors.d}")
    A, G, L = _prepare(anchors, settings.alpha)
    X = view.samples
    n = X.shape[0]
    B_all = 2.0 * (X @ A)
    eff = _scaled_tol(settings, G, B_all)
    starts = list(range(0, n, BLOCK_ROWS))

    def run(s):
        Xb = X[s:s + BLOCK_ROWS]
        Bb = B_all[s:s + BLOCK_ROWS]
        cb = np.einsum("ij,ij->i", Xb, Xb)
        return _solve_batch(G, Bb, cb, L, eff)

    if n_jobs is None or n_jobs < 0:
        n_jobs = os.cpu_count() or 1
    if n_jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]

    Z = np.empty((n, anchors.m))
    for s, (Zb, res, _, done, _) in zip(starts, parts):
        if not done.all():
            j = int(np.flatnonzero(~done)[0])
            raise ConvergenceError(
                f"QP for sample {s + j} did not converge (KKT residual {res[j]:.3g} > "
                f"{eff.kkt_tol:g} after {settings.max_iters} iterations)",
                residual=float(res[j]), index=s + j)
        Z[s:s + Zb.shape[0]] = Zb
    return AnchorGraph(_clamp_rows(Z))


# ---------------------------------------------------------------------------
# handcrafted baseline and anchor selection

def gaussian_anchor_graph(view: ViewMatrix, anchors: AnchorSet, r, delta) -> AnchorGraph:
    """Kernel weights on the ``r`` nearest anchors, normalised per sample."""
    m = anchors.m
    if not 1 <= r < m:
        raise ValueError(f"need 1 <= r < m, got r={r}, m={m}")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if view.d != anchors.d:
        raise DimensionMismatch(f"view has {view.d} features, anchors have {anchors.d}")
    d2 = cdist(view.samples, anchors.anchors.T, metric="sqeuclidean")
    nn = np.argsort(d2, axis=1, kind="stable")[:, :r]
    dn = np.take_along_axis(d2, nn, axis=1)
    # shift by the nearest distance; the normalisation cancels it
    w = np.exp(-(dn - dn[:, :1]) / (2.0 * delta * delta))
    w /= w.sum(axis=1, keepdims=True)
    Z = np.zeros_like(d2)
    np.put_along_axis(Z, nn, w, axis=1)
    return AnchorGraph(Z)


def median_bandwidth(view: ViewMatrix, anchors: AnchorSet) -> float:
    """Median sample-to-anchor distance; a starting point for ``delta``."""
    return float(np.median(cdist(view.samples, anchors.anchors.T)))


def select_anchors(view: ViewMatrix, m, config: KMeansConfig) -> AnchorSet:
    """k-means centroids of the view's samples as anchors (``config.k`` is replaced by ``m``)."""
    if view.n < m:
        raise ValueError(f"cannot select m={m} anchors from n={view.n} samples")
    cfg = KMeansConfig(k=m, max_iters=config.max_iters, tol=config.tol,
                       n_restarts=config.n_restarts, seed=config.seed)
    model = kmeans_fit(view.samples, cfg)
    return AnchorSet(model.centroids.T)


def write_anchor_graph(graph: AnchorGraph, path, coordinate=False):
    """Matrix Market dump of ``Z`` (dense array or sparse coordinate)."""
    path = Path(path)
    tmp = path.with_name(f".{path.stem}.{os.getpid()}.tmp.mtx")
    data = scipy.sparse.coo_matrix(graph.Z) if coordinate else graph.Z
    scipy.io.mmwrite(str(tmp), data, precision=17)
    os.replace(tmp, path)


def read_anchor_graph(path) -> AnchorGraph:
    m = scipy.io.mmread(str(path))
    if scipy.sparse.issparse(m):
        m = m.toarray()
    return AnchorGraph(np.asarray(m, dtype=np.float64))
