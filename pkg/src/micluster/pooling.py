"""Pooling partitions of multiply imputed data.

The consensus partition minimizes the squared distance between its
connectivity matrix and the mean connectivity matrix of the inputs.  The
total instability adds the average within-copy bootstrap instability to
the average pairwise disagreement between the copies' partitions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import rand
from .clustering import ClustererSpec, fit_clusterer, kmeans, standardize
from .exceptions import InvalidParameterError
from .gmm import Partition
from .validation import check_complete

logger = logging.getLogger(__name__)

__all__ = [
    "ConsensusResult",
    "connectivity",
    "mirkin",
    "ari",
    "consensus_objective",
    "consensus",
    "instability_single",
    "total_instability",
    "pool",
    "choose_k",
    "ChooseKResult",
    "instability_table",
]


def _labels(p) -> np.ndarray:
    if isinstance(p, Partition):
        return p.labels
    labels = np.asarray(p)
    if labels.ndim != 1:
        raise InvalidParameterError("a partition is a vector of labels")
    return labels


def _pair(p1, p2):
    a, b = _labels(p1), _labels(p2)
    if a.shape != b.shape:
        raise InvalidParameterError(f"partitions have different lengths ({a.size} vs {b.size})")
    return a, b


def connectivity(p) -> np.ndarray:
    """Boolean ``(n, n)`` matrix, True where two rows share a cluster."""
    labels = _labels(p)
    return labels[:, None] == labels[None, :]


def _contingency(a, b):
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1 if ia.size else 0, ib.max() + 1 if ib.size else 0), dtype=np.int64)
    np.add.at(table, (ia.ravel(), ib.ravel()), 1)
    return table


def mirkin(p1, p2) -> int:
    """Number of ordered pairs on which the connectivity matrices differ."""
    a, b = _pair(p1, p2)
    t = _contingency(a, b)
    return int((t.sum(axis=1) ** 2).sum() + (t.sum(axis=0) ** 2).sum() - 2 * (t**2).sum())


def ari(p1, p2) -> float:
    """Adjusted Rand index (Hubert and Arabie)."""
    a, b = _pair(p1, p2)
    n = a.size
    if n < 2:
        return 1.0
    t = _contingency(a, b)

    def comb2(x):
        x = np.asarray(x, dtype=float)
        return (x * (x - 1) / 2).sum()

    index = comb2(t)
    rows, cols = comb2(t.sum(axis=1)), comb2(t.sum(axis=0))
    expected = rows * cols / (n * (n - 1) / 2)
    top = 0.5 * (rows + cols)
    if top == expected:
        # both partitions trivial (one cluster or all singletons) and equal
        return 1.0
    return float((index - expected) / (top - expected))


def mean_connectivity(parts) -> np.ndarray:
    parts = [_labels(p) for p in parts]
    if not parts:
        raise InvalidParameterError("need at least one partition")
    n = parts[0].size
    if any(p.size != n for p in parts):
        raise InvalidParameterError("partitions have different lengths")
    acc = np.zeros((n, n))
    for p in parts:
        acc += connectivity(p)
    return acc / len(parts)


def consensus_objective(mbar: np.ndarray, p) -> float:
    """``||mbar - H||^2`` for the connectivity matrix ``H`` of ``p``."""
    return float(((mbar - connectivity(p)) ** 2).sum())


# --------------------------------------------------------------------------
# consensus


def _symnmf(mbar, q, max_iter, tol):
    """Multiplicative updates for ``min ||mbar - Q Q'||^2`` with ``Q >= 0``."""
    prev = np.inf
    converged = False
    scale = float((mbar**2).sum())
    for _ in range(max_iter):
        num = mbar @ q
        den = q @ (q.T @ q)
        q = q * (0.5 + 0.5 * num / np.maximum(den, 1e-300))
        obj = float(((mbar - q @ q.T) ** 2).sum())
        if prev - obj <= tol * scale:
            converged = True
            break
        prev = obj
    return q, converged


def _fill_empty(labels, k, g):
    """Give each empty cluster the row whose move costs least."""
    labels = labels.copy()
    for c in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[c] > 0:
            continue
        s = g @ np.eye(k)[labels]
        own = s[np.arange(labels.size), labels] - np.diag(g)
        delta = 2.0 * (s[:, c] - own)
        delta[counts[labels] <= 1] = np.inf
        labels[int(np.argmin(delta))] = c
    return labels


def _local_search(labels, k, g, max_moves):
    """Steepest single-row moves on ``sum_{same cluster} g_ij``; keeps clusters non-empty."""
    n = labels.size
    labels = labels.copy()
    s = g @ np.eye(k)[labels]
    diag = np.diag(g)
    counts = np.bincount(labels, minlength=k)
    rows = np.arange(n)
    for _ in range(max_moves):
        own = s[rows, labels] - diag
        delta = 2.0 * (s - own[:, None])
        delta[rows, labels] = np.inf
        delta[counts[labels] <= 1] = np.inf
        flat = int(np.argmin(delta))
        i, c = divmod(flat, k)
        if not delta[i, c] < -1e-12:
            break
        a = labels[i]
        s[:, a] -= g[:, i]
        s[:, c] += g[:, i]
        counts[a] -= 1
        counts[c] += 1
        labels[i] = c
    return labels


def _canonical(labels):
    """Relabel clusters in order of first appearance."""
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    return np.argsort(np.argsort(first))[inv.reshape(-1)]


@dataclass
class ConsensusResult:
    partition: Partition
    mean_connectivity: np.ndarray
    objective: float
    converged: bool = True
    per_copy_instability: np.ndarray | None = None
    total_instability: float | None = None


def consensus(parts, k: int, rng, *, max_iter: int = 500, tol: float = 1e-7, refine: bool = True) -> ConsensusResult:
    """Consensus partition with ``k`` clusters.

    Symmetric NMF of the mean connectivity matrix, hardened by row argmax,
    then improved by single-row moves.  The input partitions also seed the
    move search; the best objective wins.
    """
    parts = [_labels(p) for p in parts]
    mbar = mean_connectivity(parts)
    n = mbar.shape[0]
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= n:
        raise InvalidParameterError(f"k must lie in [1, n={n}], got {k!r}")
    rng = rand.as_generator(rng)
    if k == 1:
        labels = np.zeros(n, dtype=np.int64)
        return ConsensusResult(Partition(labels, 1), mbar, consensus_objective(mbar, labels))
    start = kmeans(mbar, k, rng).onehot()
    q0 = start + 1e-3 * rng.random(start.shape)
    q, converged = _symnmf(mbar, q0, max_iter, tol)
    if not converged:
        logger.debug("consensus NMF stopped after %d iterations", max_iter)
    g = 1.0 - 2.0 * mbar
    candidates = [np.argmax(q, axis=1)]
    if refine:
        for p in parts:
            if np.unique(p).size <= k:
                candidates.append(_canonical(p))
    best, best_obj = None, np.inf
    for cand in candidates:
        labels = _fill_empty(cand, k, g)
        if refine:
            labels = _local_search(labels, k, g, max_moves=10 * n)
        obj = consensus_objective(mbar, labels)
        if obj < best_obj - 1e-12:
            best, best_obj = labels, obj
    best = _canonical(best)
    return ConsensusResult(Partition(best, k), mbar, best_obj, converged)


# --------------------------------------------------------------------------
# instability


def instability_single(X, spec: ClustererSpec, b: int, rng) -> float:
    """Bootstrap instability of one clustering of ``X``.

    For each of ``b`` rounds, two bootstrap samples are clustered and both
    clusterings are extended to all rows; the result is the mean fraction of
    ordered row pairs on which the two extensions disagree.  Exact score
    ties in the extension are broken at random.
    """
    X = check_complete(X)
    if isinstance(b, bool) or int(b) != b or b < 1:
        raise InvalidParameterError(f"b must be a positive integer, got {b!r}")
    rng = rand.as_generator(rng)
    if spec.standardize:
        X = standardize(X)
    n = X.shape[0]
    total = 0.0
    for _ in range(int(b)):
        ext = []
        for _ in range(2):
            idx = rng.integers(n, size=n)
            fitted = fit_clusterer(X[idx], spec, rng, prestandardized=True)
            ext.append(fitted.predict(X, rng))
        total += mirkin(ext[0], ext[1]) / n**2
    return total / b


def total_instability(parts, instabilities) -> float:
    """Mean per-copy instability plus the mean pairwise Mirkin distance over ``n**2``."""
    parts = [_labels(p) for p in parts]
    v = np.asarray(instabilities, dtype=float)
    if len(parts) == 0 or v.shape != (len(parts),):
        raise InvalidParameterError("need one instability per partition")
    n = parts[0].size
    m = len(parts)
    cross = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            cross += 2 * mirkin(parts[i], parts[j])
    return float(v.mean() + cross / (m**2 * n**2))


def pool(parts, k: int, rng, instabilities=None) -> ConsensusResult:
    """Consensus partition, with the total instability when per-copy values are given."""
    res = consensus(parts, k, rng)
    if instabilities is not None:
        res.per_copy_instability = np.asarray(instabilities, dtype=float)
        res.total_instability = total_instability(parts, instabilities)
    return res


# --------------------------------------------------------------------------
# choice of the number of clusters


@dataclass
class ChooseKResult:
    k: int
    instability: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"k": list(self.instability), "total_instability": list(self.instability.values())})


def analyse_copies(completed, spec: ClustererSpec, rng, b: int = 20):
    """Partition and bootstrap instability of every completed dataset."""
    rng = rand.as_generator(rng)
    parts, inst = [], []
    for Z, sub in zip(completed, rand.spawn(rng, len(completed))):
        parts.append(fit_clusterer(Z, spec, sub).partition.labels)
        inst.append(instability_single(Z, spec, b, sub) if b > 0 else 0.0)
    return parts, np.array(inst)


def choose_k(data, impute, spec: ClustererSpec, k_max: int, rng, *, b: int = 20) -> ChooseKResult:
    """Total instability for ``K = 2..k_max`` and its argmin (lowest ``K`` on ties).

    ``impute(data, K, rng)`` returns an object with a ``completed`` list; the
    imputation is redone for each ``K`` since the class count enters the
    imputation model.
    """
    if isinstance(k_max, bool) or int(k_max) != k_max or k_max < 2:
        raise InvalidParameterError(f"k_max must be an integer >= 2, got {k_max!r}")
    rng = rand.as_generator(rng)
    table = {}
    for K, sub in zip(range(2, k_max + 1), rand.spawn(rng, k_max - 1)):
        result = impute(data, K, sub)
        parts, inst = analyse_copies(result.completed, spec.with_k(K), sub, b)
        table[K] = total_instability(parts, inst)
    best = min(table, key=lambda K: (table[K], K))
    return ChooseKResult(best, table)


def instability_table(rows: dict, path=None) -> pd.DataFrame:
    """Table with one row per ``(clusterer, engine)`` key and one column per ``K``."""
    records = []
    for (clusterer, engine), values in rows.items():
        if isinstance(values, ChooseKResult):
            values = values.instability
        rec = {"clusterer": clusterer, "engine": engine}
        rec.update({f"K{K}": v for K, v in sorted(values.items())})
        records.append(rec)
    df = pd.DataFrame(records)
    if path is not None:
        df.to_csv(path, index=False, float_format="%.17g")
    return df
