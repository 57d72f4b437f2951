"""Command-line entry point: ``lmvsc {synth,fit,grid,eval,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import metrics
from .anchor_graph import QpSettings
from .bench import DEFAULT_LADDER, BenchSettings, bench_csv, format_slope, run_bench
from .dataset import (NOISE_KINDS, STANDARDIZE_MODES, MultiViewDataset, NoiseSpec,
                      ViewMatrix, atomic_write_text, load_from_paths, load_labels,
                      load_multiview, noisy_views, synth_multiview, write_dataset,
                      write_labels)
from .kmeans import KMeansConfig
from .pipeline import GridSpec, LmvscConfig, grid_search, grid_table_csv, lmvsc_fit

log = logging.getLogger("lmvsc")


class CliError(Exception):
    pass


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _add_data_args(p):
    p.add_argument("--manifest", help="dataset manifest ('view = path' lines, optional 'labels = path')")
    p.add_argument("--views", nargs="+", help="view files (CSV or .mtx, rows are samples)")
    p.add_argument("--labels", help="ground-truth labels, one integer per line")
    p.add_argument("--has-header", action="store_true", help="CSV files start with a header row")
    p.add_argument("--pixel-scale", action="store_true", help="divide inputs by 255")


def _add_model_args(p, grid=False):
    p.add_argument("--k", type=int, required=True, help="number of clusters")
    if not grid:
        p.add_argument("--m", type=int, required=True, help="anchors per view")
        p.add_argument("--alpha", type=float, required=True, help="regularisation weight")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--standardize", choices=STANDARDIZE_MODES, default="none")
    p.add_argument("--normalize-q", action="store_true",
                   help="scale embedding rows to unit length before the final k-means")
    p.add_argument("--restarts", type=int, default=10, help="k-means restarts (both stages)")
    p.add_argument("--qp-max-iters", type=int, default=500)
    p.add_argument("--qp-tol", type=float, default=1e-8)


def _load_data(args) -> MultiViewDataset:
    if bool(args.manifest) == bool(args.views):
        raise CliError("give exactly one of --manifest or --views")
    if args.manifest:
        data = load_multiview(args.manifest, has_header=args.has_header,
                              pixel_scale=args.pixel_scale)
        if args.labels:
            data = MultiViewDataset(data.views, load_labels(args.labels))
        return data
    return load_from_paths(args.views, args.labels, has_header=args.has_header,
                           pixel_scale=args.pixel_scale)


def _config(args, m=None, alpha=None) -> LmvscConfig:
    m = args.m if m is None else m
    alpha = args.alpha if alpha is None else alpha
    return LmvscConfig(
        k=args.k, m=m, alpha=alpha,
        kmeans_anchor=KMeansConfig(k=m, n_restarts=args.restarts, seed=args.seed),
        kmeans_final=KMeansConfig(k=args.k, n_restarts=args.restarts, seed=args.seed),
        qp=QpSettings(alpha, max_iters=args.qp_max_iters, kkt_tol=args.qp_tol),
        standardize_mode=args.standardize, seed=args.seed,
        normalize_q=args.normalize_q, n_jobs=args.threads)


def _table(rows):
    """Acc / NMI / Purity / Time layout."""
    lines = [f"{'Method':<12}{'Acc':>9}{'NMI':>9}{'Purity':>9}{'Time (s)':>11}"]
    for name, scores, seconds in rows:
        if scores:
            a, n, p = (f"{scores[k]:.4f}" for k in ("acc", "nmi", "purity"))
        else:
            a = n = p = "-"
        lines.append(f"{name:<12}{a:>9}{n:>9}{p:>9}{seconds:>11.2f}")
    return "\n".join(lines)


def cmd_fit(args):
    data = _load_data(args)
    if args.require_metrics and data.labels is None:
        raise CliError("labels required (--require-metrics was given but no labels were supplied)")
    res = lmvsc_fit(data, _config(args))
    if args.out:
        res.write_json(args.out)
    if args.labels_out:
        write_labels(res.labels, args.labels_out)
    print(_table([("LMVSC", res.metrics, res.timings["total"])]))
    return 0


def cmd_grid(args):
    data = _load_data(args)
    m_values = None
    if args.grid_m:
        m_values = tuple(args.k if x.strip() == "k" else int(x) for x in args.grid_m.split(","))
    alphas = tuple(_float_list(args.grid_alpha)) if args.grid_alpha else GridSpec().alpha_values
    grid = GridSpec(m_values=m_values, alpha_values=alphas, selection=args.selection)
    base = _config(args, m=max(grid.resolved_m(args.k)[0], args.k), alpha=alphas[0])
    best, cells = grid_search(data, grid, base)
    for c in cells:
        if c.status == "skipped":
            log.warning("skipped cell m=%d alpha=%g: %s", c.m, c.alpha, c.reason)
    if args.out:
        atomic_write_text(args.out, grid_table_csv(cells))
    if args.result_out:
        best.write_json(args.result_out)
    print(_table([(f"m={c.m},a={c.alpha:g}", c.metrics, c.time) for c in cells if c.status == "ok"]))
    print(f"selected m={best.config.m} alpha={best.config.alpha:g} ({grid.selection})")
    return 0


def cmd_synth(args):
    if args.noise_levels and not args.noise_kind:
        raise CliError("--noise-levels needs --noise-kind")
    if args.noise_kind:
        # one base view, one corrupted copy per noise level
        levels = _float_list(args.noise_levels) if args.noise_levels else []
        if not levels:
            raise CliError("--noise-kind needs --noise-levels")
        base, labels = synth_multiview(args.n, args.k, 1, dims=[args.dims[0]] if args.dims else None,
                                       subspace_dim=args.subspace_dim,
                                       noise_sigma=args.noise_sigma, seed=args.seed)
        x = base.views[0].data
        lo, hi = x.min(), x.max()
        scaled = ViewMatrix((x - lo) / (hi - lo) if hi > lo else x * 0.0)
        specs = [NoiseSpec(args.noise_kind, lvl, seed=args.seed + 1 + i)
                 for i, lvl in enumerate(levels)]
        data = MultiViewDataset(noisy_views(scaled, specs), labels)
    else:
        dims = args.dims if args.dims else None
        if dims is not None and len(dims) == 1:
            dims = dims * args.v
        data, _ = synth_multiview(args.n, args.k, args.v, dims=dims,
                                  subspace_dim=args.subspace_dim,
                                  noise_sigma=args.noise_sigma, seed=args.seed)
    manifest = write_dataset(data, args.out, fmt=args.format)
    print(f"wrote {data.v} view(s), n={data.n}, manifest {manifest}")
    return 0


def cmd_eval(args):
    pred = load_labels(args.pred)
    truth = load_labels(args.truth)
    scores = metrics.evaluate(pred, truth)
    if args.out:
        atomic_write_text(args.out, json.dumps(scores, indent=2, sort_keys=True) + "\n")
    print(_table([("eval", scores, 0.0)]))
    return 0


def cmd_bench(args):
    settings = BenchSettings(
        ladder=tuple(args.ladder), m=args.m, v=args.v, k=args.k, d=args.d,
        subspace_dim=args.subspace_dim, alpha=args.alpha, repeats=args.repeats,
        seed=args.seed, n_jobs=args.threads)
    rows, slope = run_bench(settings)
    text = bench_csv(rows)
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    print(f"log-log slope (graph_learning + embedding vs n): {format_slope(slope)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lmvsc", description="Large-scale multi-view subspace clustering")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="cluster a dataset")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out", help="result JSON")
    p.add_argument("--labels-out", help="predicted labels, one per line")
    p.add_argument("--require-metrics", action="store_true",
                   help="fail unless ground-truth labels are available")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("grid", help="grid search over anchor count and alpha")
    _add_data_args(p)
    _add_model_args(p, grid=True)
    p.add_argument("--grid-m", help="comma list of anchor counts; 'k' means the cluster count "
                                    "(default k,50,100)")
    p.add_argument("--grid-alpha", help="comma list of alphas (default 0.001,0.01,0.1,1,10)")
    p.add_argument("--selection", choices=("best_acc", "best_inertia"), default="best_acc")
    p.add_argument("--out", help="CSV table of every cell")
    p.add_argument("--result-out", help="JSON of the selected cell")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("synth", help="write a synthetic union-of-subspaces dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--v", type=int, default=2)
    p.add_argument("--dims", type=_int_list, help="features per view (one value applies to all)")
    p.add_argument("--subspace-dim", type=int, default=3)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.add_argument("--noise-kind", choices=NOISE_KINDS,
                   help="build one view per level of this noise from a single base view")
    p.add_argument("--noise-levels", help="comma list, e.g. 0.01,0.03,0.05")
    p.add_argument("--format", choices=("csv", "mtx"), default="csv")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score predicted labels against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", help="metrics JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="timing ladder over n")
    p.add_argument("--ladder", type=_int_list, default=list(DEFAULT_LADDER))
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--v", type=int, default=3)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--subspace-dim", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="CSV of stage timings")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        stage = getattr(exc, "stage", None)
        tag = f"{args.command}" if stage is None else f"{args.command}/{stage}"
        msg = str(exc) if stage is None else str(exc.original)
        print(f"error [{tag}]: {msg}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
