"""Multi-view data model, file loaders, synthetic data and noise corruption.

Internally a view is a ``d x n`` matrix whose columns are samples. On disk
(CSV and Matrix Market) every row is a sample.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.io
import scipy.sparse

from .errors import DimensionMismatch, ParseError

NOISE_KINDS = ("gaussian", "salt_pepper", "speckle")
STANDARDIZE_MODES = ("none", "zscore", "unit_range")


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ViewMatrix:
    """One view: ``data`` has shape (d_i, n), columns are samples."""

    data: np.ndarray
    view_id: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionMismatch(f"view data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionMismatch(f"view must have d >= 1 and n >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("view contains NaN or Inf entries")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def d(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def samples(self) -> np.ndarray:
        """Samples as rows, shape (n, d)."""
        return self.data.T


@dataclass(frozen=True)
class LabelVector:
    """Integer class ids 0..k-1, every id used at least once."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 1:
            raise DimensionMismatch("labels must be a 1-D array")
        if lab.size and not np.issubdtype(lab.dtype, np.integer):
            if not np.all(np.equal(np.mod(lab, 1), 0)):
                raise ValueError("labels must be integers")
        lab = lab.astype(np.int64)
        if lab.size:
            present = np.unique(lab)
            if present[0] != 0 or present[-1] != present.size - 1:
                raise ValueError("class ids must be 0..k-1 with every id present")
        lab = lab.copy()
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_any(cls, labels) -> "LabelVector":
        """Relabel arbitrary hashable ids to consecutive 0..k-1 (sorted order)."""
        if isinstance(labels, LabelVector):
            return labels
        _, inv = np.unique(np.asarray(labels), return_inverse=True)
        return cls(inv.ravel())

    @property
    def k_true(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def __len__(self):
        return self.labels.size


@dataclass(frozen=True)
class MultiViewDataset:
    views: tuple
    labels: Optional[LabelVector] = None

    def __post_init__(self):
        views = tuple(self.views)
        if len(views) < 1:
            raise ValueError("a dataset needs at least one view")
        n = views[0].n
        for i, v in enumerate(views):
            if v.n != n:
                raise DimensionMismatch(
                    f"view {i} has {v.n} samples but view 0 has {n}")
        labels = self.labels
        if labels is not None:
            labels = LabelVector.from_any(labels) if not isinstance(labels, LabelVector) else labels
            if len(labels) != n:
                raise DimensionMismatch(f"labels have length {len(labels)}, expected {n}")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.views[0].n

    @property
    def v(self) -> int:
        return len(self.views)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        level = float(self.level)
        if self.kind == "salt_pepper":
            if not 0.0 < level < 1.0:
                raise ValueError("salt_pepper density must lie in (0, 1)")
        elif not level > 0.0:
            raise ValueError(f"{self.kind} variance must be > 0")
        if int(self.seed) < 0:
            raise ValueError("seed must be non-negative")


# ---------------------------------------------------------------------------
# loading / writing

def _read_csv_rows(path, has_header):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and has_header:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ParseError(
                f"{path}: ragged rows (row {i + 1} has {len(r)} fields, expected {width})")
    return np.asarray(rows, dtype=np.float64)


def _check_finite(a, path):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{path}: contains NaN or Inf values")


def load_view_csv(path, has_header=False, view_id=0, pixel_scale=False) -> ViewMatrix:
    """Read a CSV whose rows are samples into a ``d x n`` view.

    ``pixel_scale`` divides by 255 so integer intensities land on [0, 1].
    """
    rows = _read_csv_rows(path, has_header)
    _check_finite(rows, path)
    if pixel_scale:
        rows = rows / 255.0
    return ViewMatrix(rows.T, view_id=view_id)


def load_view_mtx(path, view_id=0, pixel_scale=False) -> ViewMatrix:
    """Read a Matrix Market file (array or coordinate), rows are samples."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        m = scipy.io.mmread(str(path))
    except Exception as exc:  # scipy raises a mix of ValueError/IndexError
        raise ParseError(f"{path}: {exc}") from None
    if scipy.sparse.issparse(m):
        m = m.toarray()
    m = np.asarray(m, dtype=np.float64)
    _check_finite(m, path)
    if pixel_scale:
        m = m / 255.0
    return ViewMatrix(m.T, view_id=view_id)


def load_view(path, view_id=0, has_header=False, pixel_scale=False) -> ViewMatrix:
    if str(path).lower().endswith(".mtx"):
        return load_view_mtx(path, view_id=view_id, pixel_scale=pixel_scale)
    return load_view_csv(path, has_header=has_header, view_id=view_id, pixel_scale=pixel_scale)


def load_labels(path) -> LabelVector:
    """One integer per line. Ids are remapped to 0..k-1 in sorted order."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                out.append(int(s))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: label {s!r} is not an integer") from None
    return LabelVector.from_any(np.asarray(out, dtype=np.int64))


def parse_manifest(path):
    """Return (view paths, labels path or None) from a ``key = value`` manifest.

    Relative paths resolve against the manifest's directory. ``#`` starts a
    comment.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    base = path.parent
    views, labels = [], None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            p = Path(value)
            if not p.is_absolute():
                p = base / p
            if key == "view":
                views.append(p)
            elif key == "labels":
                if labels is not None:
                    raise ParseError(f"{path}:{lineno}: labels given twice")
                labels = p
            else:
                raise ParseError(f"{path}:{lineno}: unknown key {key!r}")
    if not views:
        raise ParseError(f"{path}: manifest lists no views")
    return views, labels


def load_multiview(manifest, has_header=False, pixel_scale=False) -> MultiViewDataset:
    view_paths, labels_path = parse_manifest(manifest)
    return load_from_paths(view_paths, labels_path, has_header=has_header,
                           pixel_scale=pixel_scale)


def load_from_paths(view_paths, labels_path=None, has_header=False,
                    pixel_scale=False) -> MultiViewDataset:
    views = [load_view(p, view_id=i, has_header=has_header, pixel_scale=pixel_scale)
             for i, p in enumerate(view_paths)]
    labels = load_labels(labels_path) if labels_path is not None else None
    return MultiViewDataset(tuple(views), labels)


def atomic_write_text(path, text):
    """Write via a sibling temp file and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _format_rows(rows):
    return "".join(",".join(repr(float(x)) for x in r) + "\n" for r in rows)


def write_view_csv(view: ViewMatrix, path):
    # repr() round-trips doubles exactly
    atomic_write_text(path, _format_rows(view.samples))


def write_view_mtx(view: ViewMatrix, path):
    path = Path(path)
    tmp = path.with_name(f".{path.stem}.{os.getpid()}.tmp.mtx")
    scipy.io.mmwrite(str(tmp), view.samples, precision=17)
    os.replace(tmp, path)


def write_labels(labels, path):
    lab = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels)
    atomic_write_text(path, "".join(f"{int(x)}\n" for x in lab))


def write_dataset(data: MultiViewDataset, directory, prefix="view", fmt="csv"):
    """Write every view plus labels and a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, view in enumerate(data.views):
        name = f"{prefix}{i}.{fmt}"
        if fmt == "csv":
            write_view_csv(view, directory / name)
        elif fmt == "mtx":
            write_view_mtx(view, directory / name)
        else:
            raise ValueError(f"unknown format {fmt!r}")
        lines.append(f"view = {name}\n")
    if data.labels is not None:
        write_labels(data.labels, directory / "labels.txt")
        lines.append("labels = labels.txt\n")
    manifest = directory / "manifest.txt"
    atomic_write_text(manifest, "".join(lines))
    return manifest


# ---------------------------------------------------------------------------
# preprocessing

def standardize(view: ViewMatrix, mode="none") -> ViewMatrix:
    """Per-feature scaling. Constant features map to 0 in both modes."""
    if mode not in STANDARDIZE_MODES:
        raise ValueError(f"unknown standardize mode {mode!r}")
    if mode == "none":
        return view
    x = view.data
    if mode == "zscore":
        mu = x.mean(axis=1, keepdims=True)
        sd = x.std(axis=1, keepdims=True)
        # a constant row can come out with a rounding-level std; treat it as zero
        sd = np.where(sd > 1e-12 * np.abs(x).max(axis=1, keepdims=True), sd, 0.0)
        safe = np.where(sd > 0, sd, 1.0)
        out = np.where(sd > 0, (x - mu) / safe, 0.0)
    else:
        lo = x.min(axis=1, keepdims=True)
        span = x.max(axis=1, keepdims=True) - lo
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (x - lo) / safe, 0.0)
    return ViewMatrix(out, view_id=view.view_id)


# ---------------------------------------------------------------------------
# synthetic data and noise

def synth_multiview(n, k, v=2, dims=None, subspace_dim=3, noise_sigma=0.01, seed=0):
    """Union-of-subspaces data seen through ``v`` views.

    In every view each cluster gets its own random orthonormal basis; a
    sample is that basis times standard-normal coefficients (drawn afresh
    per view) plus isotropic Gaussian noise. Only the labels are shared
    across views. Labels are balanced (``j mod k``). ``dims`` defaults to
    ``max(30, 3 * subspace_dim)`` features per view.

    Returns
    -------
    (MultiViewDataset, LabelVector)
    """
    if dims is None:
        dims = [max(30, 3 * subspace_dim)] * v
    dims = [int(d) for d in dims]
    if len(dims) != v:
        raise ValueError(f"dims has {len(dims)} entries for v={v} views")
    if not (n >= k >= 1):
        raise ValueError("need n >= k >= 1")
    if v < 1:
        raise ValueError("need v >= 1")
    if subspace_dim < 1:
        raise ValueError("subspace_dim must be >= 1")
    if any(d < subspace_dim for d in dims):
        raise ValueError("every view dimension must be >= subspace_dim")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")

    rng = np.random.default_rng(seed)
    labels = np.arange(n) % k
    views = []
    for i, d in enumerate(dims):
        coeffs = rng.standard_normal((subspace_dim, n))
        bases = [np.linalg.qr(rng.standard_normal((d, subspace_dim)))[0] for _ in range(k)]
        x = np.empty((d, n))
        for c in range(k):
            idx = labels == c
            x[:, idx] = bases[c] @ coeffs[:, idx]
        if noise_sigma > 0:
            x += noise_sigma * rng.standard_normal((d, n))
        views.append(ViewMatrix(x, view_id=i))
    lab = LabelVector(labels)
    return MultiViewDataset(tuple(views), lab), lab


def add_noise(view: ViewMatrix, spec: NoiseSpec) -> ViewMatrix:
    """Corrupt a view. Salt&pepper and speckle assume [0, 1] intensities and clamp."""
    rng = np.random.default_rng(spec.seed)
    x = view.data
    level = float(spec.level)
    if spec.kind == "gaussian":
        out = x + rng.normal(0.0, math.sqrt(level), size=x.shape)
    elif spec.kind == "speckle":
        out = np.clip(x + x * rng.normal(0.0, math.sqrt(level), size=x.shape), 0.0, 1.0)
    else:
        out = np.array(x, copy=True)
        hit = rng.random(x.shape) < level
        salt = rng.random(x.shape) < 0.5
        out[hit & salt] = 1.0
        out[hit & ~salt] = 0.0
        out = np.clip(out, 0.0, 1.0)
    return ViewMatrix(out, view_id=view.view_id)


def noisy_views(base: ViewMatrix, specs: Sequence[NoiseSpec]) -> tuple:
    """One corrupted copy of ``base`` per spec, in order (one view each)."""
    return tuple(
        ViewMatrix(add_noise(base, s).data, view_id=i) for i, s in enumerate(specs))
