"""Scaling benchmark: stage timings over a geometric ladder of sample counts."""

from __future__ import annotations

import dataclasses
import math
import time

import numpy as np

from .anchor_graph import QpSettings, learn_anchor_graph, select_anchors
from .dataset import synth_multiview
from .embedding import concat_views, embed, normalize_graph
from .kmeans import KMeansConfig, assign, kmeans_fit

DEFAULT_LADDER = tuple(5000 * 2 ** i for i in range(4))

COLUMNS = ("n", "anchor_kmeans", "graph_learning", "embedding", "final_kmeans",
           "graph_plus_embedding")


@dataclasses.dataclass
class BenchSettings:
    ladder: tuple = DEFAULT_LADDER
    m: int = 50
    v: int = 3
    k: int = 10
    d: int = 50
    subspace_dim: int = 5
    alpha: float = 0.01
    noise_sigma: float = 0.01
    repeats: int = 5
    seed: int = 0
    # anchor quality is not what is being timed; a short k-means suffices
    anchor_kmeans_iters: int = 20
    n_jobs: int = 1


def _run_once(data, anchors, settings, qp):
    t0 = time.perf_counter()
    graphs = [learn_anchor_graph(view, a, qp, n_jobs=settings.n_jobs)
              for view, a in zip(data.views, anchors)]
    t1 = time.perf_counter()
    emb = embed(concat_views([normalize_graph(g) for g in graphs]), settings.k)
    t2 = time.perf_counter()
    return t1 - t0, t2 - t1, emb


def run_bench(settings: BenchSettings):
    """Time each stage for every ladder size.

    Graph learning and embedding are repeated ``settings.repeats`` times
    and reported as medians; anchor selection and the final k-means run
    once. Returns (rows, slope) where ``slope`` is the least-squares
    log-log slope of graph learning plus embedding time against ``n``, or
    ``None`` for a ladder with fewer than two sizes.
    """
    rows = []
    qp = QpSettings(settings.alpha)
    for i, n in enumerate(settings.ladder):
        data, _ = synth_multiview(n, settings.k, settings.v, dims=[settings.d] * settings.v,
                                  subspace_dim=settings.subspace_dim,
                                  noise_sigma=settings.noise_sigma, seed=settings.seed + i)
        t0 = time.perf_counter()
        cfg = KMeansConfig(k=settings.m, max_iters=settings.anchor_kmeans_iters,
                           n_restarts=1, seed=settings.seed)
        anchors = [select_anchors(view, settings.m, cfg) for view in data.views]
        t_anchor = time.perf_counter() - t0
        graph_t, emb_t, both = [], [], []
        emb = None
        for _ in range(settings.repeats):
            g, e, emb = _run_once(data, anchors, settings, qp)
            graph_t.append(g)
            emb_t.append(e)
            both.append(g + e)
        t0 = time.perf_counter()
        model = kmeans_fit(emb.Q, KMeansConfig(k=settings.k, n_restarts=1, seed=settings.seed))
        assign(model, emb.Q)
        t_final = time.perf_counter() - t0
        rows.append({
            "n": int(n),
            "anchor_kmeans": t_anchor,
            "graph_learning": float(np.median(graph_t)),
            "embedding": float(np.median(emb_t)),
            "final_kmeans": t_final,
            "graph_plus_embedding": float(np.median(both)),
        })
    return rows, loglog_slope([r["n"] for r in rows], [r["graph_plus_embedding"] for r in rows])


def loglog_slope(ns, times):
    if len(ns) < 2:
        return None
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.maximum(np.asarray(times, dtype=np.float64), 1e-12))
    return float(np.polyfit(x, y, 1)[0])


def bench_csv(rows) -> str:
    out = [",".join(COLUMNS) + "\n"]
    for r in rows:
        out.append(",".join(str(r["n"]) if c == "n" else f"{r[c]:.6f}" for c in COLUMNS) + "\n")
    return "".join(out)


def format_slope(slope) -> str:
    return "n/a" if slope is None or math.isnan(slope) else f"{slope:.4f}"
