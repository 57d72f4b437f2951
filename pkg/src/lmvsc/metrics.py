"""Partition-comparison scores: clustering accuracy, NMI and purity.

All three read the same contingency table, so they accept any integer (or
hashable) labelling of either argument.

NMI is normalised by the geometric mean of the two entropies, with natural
logarithms. Other normalisations (arithmetic mean, max) give different
numbers on the same partitions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import LengthMismatch


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # (k_pred, k_true)
    n: int


def _as_array(labels):
    return np.asarray(getattr(labels, "labels", labels)).ravel()


def contingency(pred, truth) -> ContingencyTable:
    p, t = _as_array(pred), _as_array(truth)
    if p.shape[0] != t.shape[0]:
        raise LengthMismatch(f"label vectors differ in length: {p.shape[0]} vs {t.shape[0]}")
    _, pi = np.unique(p, return_inverse=True)
    _, ti = np.unique(t, return_inverse=True)
    kp = int(pi.max()) + 1 if p.size else 0
    kt = int(ti.max()) + 1 if t.size else 0
    counts = np.zeros((kp, kt), dtype=np.int64)
    np.add.at(counts, (pi.ravel(), ti.ravel()), 1)
    return ContingencyTable(counts, int(p.shape[0]))


def accuracy(pred, truth) -> float:
    """Best one-to-one matching of predicted to true classes, as a fraction of n."""
    ct = contingency(pred, truth)
    if ct.n == 0:
        return 0.0
    c = ct.counts
    size = max(c.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[:c.shape[0], :c.shape[1]] = c
    rows, cols = linear_sum_assignment(-padded)
    return float(padded[rows, cols].sum()) / ct.n


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth) -> float:
    ct = contingency(pred, truth)
    n = ct.n
    if n == 0:
        return 0.0
    c = ct.counts
    h_pred = _entropy(c.sum(axis=1), n)
    h_true = _entropy(c.sum(axis=0), n)
    if h_pred == 0.0 and h_true == 0.0:
        return 1.0
    if h_pred == 0.0 or h_true == 0.0:
        return 0.0
    row = c.sum(axis=1, keepdims=True)
    col = c.sum(axis=0, keepdims=True)
    nz = c > 0
    pij = c[nz] / n
    mi = float(np.sum(pij * np.log(c[nz] * n / (row @ col)[nz])))
    return min(max(mi / np.sqrt(h_pred * h_true), 0.0), 1.0)


def purity(pred, truth) -> float:
    ct = contingency(pred, truth)
    if ct.n == 0:
        return 0.0
    return float(ct.counts.max(axis=1).sum()) / ct.n


def evaluate(pred, truth) -> dict:
    return {"acc": accuracy(pred, truth), "nmi": nmi(pred, truth), "purity": purity(pred, truth)}
