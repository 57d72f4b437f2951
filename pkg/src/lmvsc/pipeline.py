"""End-to-end clustering: anchors, learned graphs, embedding, k-means.

Stage timings are kept separately (anchor k-means, graph learning,
embedding, final k-means) so either accounting of "running time" can be
rebuilt from a result.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import metrics
from .anchor_graph import QpSettings, learn_anchor_graph, select_anchors
from .dataset import (STANDARDIZE_MODES, LabelVector, MultiViewDataset, ViewMatrix,
                      atomic_write_text, standardize)
from .embedding import concat_views, embed, normalize_graph
from .errors import ConvergenceError, LmvscError, RankDeficient
from .kmeans import KMeansConfig, assign, kmeans_fit

log = logging.getLogger(__name__)

STAGES = ("anchor_kmeans", "graph_learning", "embedding", "final_kmeans")


class StageError(LmvscError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original."""

    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage
        self.original = exc


@dataclass(frozen=True)
class LmvscConfig:
    k: int
    m: int
    alpha: float
    kmeans_anchor: KMeansConfig = None
    kmeans_final: KMeansConfig = None
    qp: QpSettings = None
    standardize_mode: str = "none"
    seed: int = 0
    normalize_q: bool = False
    n_jobs: int = 1
    keep_graphs: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.m < self.k:
            raise ValueError(
                f"m={self.m} < k={self.k}: the number of anchors needed to reveal the "
                "subspaces should not be less than the number of subspaces (clusters)")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.standardize_mode not in STANDARDIZE_MODES:
            raise ValueError(f"unknown standardize mode {self.standardize_mode!r}")
        if self.kmeans_anchor is None:
            object.__setattr__(self, "kmeans_anchor", KMeansConfig(k=self.m, seed=self.seed))
        if self.kmeans_final is None:
            object.__setattr__(self, "kmeans_final", KMeansConfig(k=self.k, seed=self.seed))
        if self.qp is None:
            object.__setattr__(self, "qp", QpSettings(self.alpha))
        elif self.qp.alpha != self.alpha:
            object.__setattr__(self, "qp", dataclasses.replace(self.qp, alpha=self.alpha))

    def with_cell(self, m, alpha) -> "LmvscConfig":
        return dataclasses.replace(self, m=m, alpha=alpha,
                                   qp=dataclasses.replace(self.qp, alpha=alpha))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("n_jobs")
        d.pop("keep_graphs")
        return d


@dataclass
class ClusteringResult:
    labels: np.ndarray
    config: LmvscConfig
    timings: dict
    metrics: Optional[dict] = None
    per_view_graphs: Optional[list] = field(default=None, repr=False)
    embedding: Optional[object] = field(default=None, repr=False)
    final_inertia: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "metrics": self.metrics,
            "timings": self.timings,
            "final_inertia": self.final_inertia,
            "n": int(self.labels.shape[0]),
            "labels": [int(x) for x in self.labels],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_json(self, path):
        atomic_write_text(path, self.to_json())


def _view_seeds(seed, v):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(v)]


def lmvsc_fit(data: MultiViewDataset, config: LmvscConfig) -> ClusteringResult:
    """Cluster a multi-view dataset.

    Runs, per view, k-means anchor selection and anchor-graph learning;
    then normalises and concatenates the graphs, takes the top-``k``
    left singular vectors and clusters their rows with k-means. Metrics
    are filled in when ``data.labels`` is present.

    Errors from any stage are re-raised as ``StageError`` naming the stage.
    """
    n = data.n
    if n < config.m:
        raise ValueError(f"need n >= m, got n={n}, m={config.m}")
    timings = dict.fromkeys(STAGES, 0.0)
    t_total = time.perf_counter()
    graphs = []
    seeds = _view_seeds(config.seed, data.v)
    for i, view in enumerate(data.views):
        view = standardize(view, config.standardize_mode)
        t0 = time.perf_counter()
        try:
            anchor_cfg = dataclasses.replace(config.kmeans_anchor, k=config.m, seed=seeds[i])
            anchors = select_anchors(view, config.m, anchor_cfg)
        except Exception as exc:
            raise StageError("anchor_kmeans", exc) from exc
        t1 = time.perf_counter()
        try:
            graphs.append(learn_anchor_graph(view, anchors, config.qp, n_jobs=config.n_jobs))
        except Exception as exc:
            raise StageError("graph_learning", exc) from exc
        t2 = time.perf_counter()
        timings["anchor_kmeans"] += t1 - t0
        timings["graph_learning"] += t2 - t1

    t0 = time.perf_counter()
    try:
        zbar = concat_views([normalize_graph(g) for g in graphs])
        emb = embed(zbar, config.k, row_normalize=config.normalize_q)
    except Exception as exc:
        raise StageError("embedding", exc) from exc
    timings["embedding"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        model = kmeans_fit(emb.Q, dataclasses.replace(config.kmeans_final, k=config.k))
        labels = assign(model, emb.Q)
    except Exception as exc:
        raise StageError("final_kmeans", exc) from exc
    timings["final_kmeans"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_total

    scores = metrics.evaluate(labels, data.labels) if data.labels is not None else None
    log.debug("lmvsc m=%d alpha=%g timings=%s metrics=%s", config.m, config.alpha, timings, scores)
    return ClusteringResult(
        labels=labels, config=config, timings=timings, metrics=scores,
        per_view_graphs=graphs if config.keep_graphs else None, embedding=emb,
        final_inertia=model.inertia)


def single_view_fit(view: ViewMatrix, config: LmvscConfig, labels=None) -> ClusteringResult:
    """The one-view case: the concatenated graph is just the normalised graph."""
    lab = LabelVector.from_any(labels) if labels is not None else None
    return lmvsc_fit(MultiViewDataset((view,), lab), config)


# ---------------------------------------------------------------------------
# grid search

DEFAULT_ALPHAS = (0.001, 0.01, 0.1, 1, 10)


@dataclass(frozen=True)
class GridSpec:
    """Anchor counts and regularisation weights to try.

    ``m_values=None`` means ``[k, 50, 100]`` for the cluster count at hand.
    """

    m_values: Optional[tuple] = None
    alpha_values: tuple = DEFAULT_ALPHAS
    selection: str = "best_acc"

    def __post_init__(self):
        if self.m_values is not None and len(self.m_values) == 0:
            raise ValueError("m_values must be non-empty")
        if len(self.alpha_values) == 0:
            raise ValueError("alpha_values must be non-empty")
        if self.selection not in ("best_acc", "best_inertia"):
            raise ValueError(f"unknown selection {self.selection!r}")

    def resolved_m(self, k):
        return list(self.m_values) if self.m_values is not None else [k, 50, 100]


@dataclass
class GridCell:
    m: int
    alpha: float
    status: str  # "ok" or "skipped"
    reason: str = ""
    metrics: Optional[dict] = None
    final_inertia: float = float("nan")
    time: float = float("nan")
    result: Optional[ClusteringResult] = field(default=None, repr=False)


def grid_search(data: MultiViewDataset, grid: GridSpec, base: LmvscConfig):
    """Fit every (m, alpha) cell with the base seed; return (best result, cells).

    Cells whose configuration is invalid or whose fit raises a rank or
    convergence error are recorded as skipped. ``best_inertia`` picks the
    lowest final k-means inertia; it is a heuristic for unlabelled data.
    """
    if grid.selection == "best_acc" and data.labels is None:
        raise ValueError("labels required for best_acc selection")
    cells = []
    for m in grid.resolved_m(base.k):
        for alpha in grid.alpha_values:
            try:
                cfg = base.with_cell(int(m), float(alpha))
                if data.n < cfg.m:
                    raise ValueError(f"m={cfg.m} exceeds n={data.n}")
            except ValueError as exc:
                cells.append(GridCell(int(m), float(alpha), "skipped", str(exc)))
                continue
            try:
                res = lmvsc_fit(data, cfg)
            except StageError as exc:
                if isinstance(exc.original, (RankDeficient, ConvergenceError)):
                    cells.append(GridCell(int(m), float(alpha), "skipped", str(exc)))
                    continue
                raise
            cells.append(GridCell(int(m), float(alpha), "ok", "", res.metrics,
                                  res.final_inertia, res.timings["total"], res))
    ok = [c for c in cells if c.status == "ok"]
    if not ok:
        raise ValueError("every grid cell was skipped")
    if grid.selection == "best_acc":
        best = max(ok, key=lambda c: c.metrics["acc"])  # first cell wins ties
    else:
        best = min(ok, key=lambda c: c.final_inertia)
    return best.result, cells


def grid_table_csv(cells) -> str:
    lines = ["m,alpha,status,acc,nmi,purity,final_inertia,time,reason\n"]
    for c in cells:
        if c.metrics:
            acc, nm, pur = (f"{c.metrics[k]:.6f}" for k in ("acc", "nmi", "purity"))
        else:
            acc = nm = pur = ""
        inertia = "" if np.isnan(c.final_inertia) else f"{c.final_inertia:.10g}"
        tm = "" if np.isnan(c.time) else f"{c.time:.4f}"
        reason = c.reason.replace('"', "'")
        lines.append(f'{c.m},{c.alpha:g},{c.status},{acc},{nm},{pur},{inertia},{tm},"{reason}"\n')
    return "".join(lines)
