"""Clustering agreement metrics and Monte Carlo summaries."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linear_sum_assignment

from .errors import ContractError, DomainError

#: Exhaustive permutation search up to this many labels; Hungarian assignment beyond.
MAX_EXHAUSTIVE_K = 8


def hard_assign(resp: ArrayLike) -> NDArray[np.int64]:
    """Row-wise argmax of a responsibility matrix; ties go to the lowest index."""
    resp = np.asarray(resp, dtype=np.float64)
    if resp.ndim != 2:
        raise ContractError("responsibilities must be a 2-D array")
    return np.argmax(resp, axis=1)


def contingency(a: ArrayLike, b: ArrayLike) -> NDArray[np.int64]:
    """Counts ``n_ij`` of items with label ``i`` in ``a`` and ``j`` in ``b``.

    The table is square (padded with empty rows/columns) so that label sets of
    different sizes can still be aligned.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError(f"label vectors differ in shape: {a.shape} vs {b.shape}")
    if a.size and (a.min() < 0 or b.min() < 0):
        raise ContractError("labels must be nonnegative integers")
    size = int(max(a.max(initial=-1), b.max(initial=-1)) + 1)
    table = np.zeros((size, size), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    return table


def _comb2(x: NDArray) -> NDArray:
    return x * (x - 1) / 2.0


def adjusted_rand(a: ArrayLike, b: ArrayLike) -> float:
    """Adjusted Rand index; 1 for identical partitions, about 0 for independent ones."""
    table = contingency(a, b).astype(np.float64)
    n = table.sum()
    index = _comb2(table).sum()
    rows = _comb2(table.sum(axis=1)).sum()
    cols = _comb2(table.sum(axis=0)).sum()
    total = _comb2(np.array(n))
    expected = rows * cols / total if total > 0 else 0.0
    max_index = 0.5 * (rows + cols)
    if max_index == expected:
        # both partitions trivial (all singletons or a single block)
        return 1.0
    return float((index - expected) / (max_index - expected))


def _entropy(counts: NDArray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def normalized_mutual_info(a: ArrayLike, b: ArrayLike) -> float:
    """Mutual information normalized by the arithmetic mean of the two entropies."""
    table = contingency(a, b).astype(np.float64)
    n = table.sum()
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return max(0.0, min(1.0, mi / (0.5 * (ha + hb))))


def purity(truth: ArrayLike, pred: ArrayLike) -> float:
    """Fraction of items whose predicted cluster's majority truth label matches theirs."""
    table = contingency(truth, pred)
    return float(table.max(axis=0).sum() / table.sum())


def best_label_permutation(truth: ArrayLike, pred: ArrayLike) -> NDArray[np.int64]:
    """Mapping ``perm`` such that ``perm[pred]`` agrees with ``truth`` as often as possible."""
    table = contingency(truth, pred)
    K = table.shape[0]
    if K <= MAX_EXHAUSTIVE_K:
        best, best_hits = None, -1
        for perm in itertools.permutations(range(K)):
            hits = table[list(perm), range(K)].sum()
            if hits > best_hits:
                best, best_hits = perm, hits
        return np.array(best, dtype=np.int64)
    rows, cols = linear_sum_assignment(-table)
    perm = np.empty(K, dtype=np.int64)
    perm[cols] = rows
    return perm


def misclassification(truth: ArrayLike, pred: ArrayLike) -> float:
    """Error rate after relabelling ``pred`` by :func:`best_label_permutation`."""
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.size == 0:
        raise DomainError("empty label vectors")
    perm = best_label_permutation(truth, pred)
    return float(np.mean(perm[pred] != truth))


@dataclass(frozen=True)
class MetricReport:
    ari: float
    nmi: float
    purity: float
    misclassification: float
    mean_max_responsibility: float
    mean_entropy: float


def responsibility_summary(resp: ArrayLike) -> tuple[float, float]:
    """Mean of the row maxima and mean row entropy (natural log) of a responsibility matrix."""
    resp = np.asarray(resp, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(resp > 0.0, resp * np.log(resp), 0.0)
    return float(resp.max(axis=1).mean()), float(-plogp.sum(axis=1).mean())


def cluster_metrics(truth: ArrayLike, pred: ArrayLike, resp: ArrayLike) -> MetricReport:
    resp = np.asarray(resp, dtype=np.float64)
    pred = np.asarray(pred)
    if resp.shape[0] != pred.shape[0]:
        raise ContractError("responsibilities and labels have different lengths")
    mmr, ent = responsibility_summary(resp)
    return MetricReport(
        ari=adjusted_rand(truth, pred),
        nmi=normalized_mutual_info(truth, pred),
        purity=purity(truth, pred),
        misclassification=misclassification(truth, pred),
        mean_max_responsibility=mmr,
        mean_entropy=ent,
    )


def summarize(values: ArrayLike) -> tuple[float, float]:
    """Median and interquartile range (linear interpolation between order statistics)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise DomainError("cannot summarize an empty list")
    q1, med, q3 = np.percentile(v, [25.0, 50.0, 75.0])
    return float(med), float(q3 - q1)
