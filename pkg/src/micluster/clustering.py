"""Cluster analyses applied to each completed dataset.

Distance-based methods (k-means, PAM, Ward) work on standardized columns
by default.  All labels are 0-based; ties go to the lowest index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClusterMixin

from . import gmm, rand
from .exceptions import InvalidParameterError
from .gmm import Partition
from .validation import check_complete, check_constraint

__all__ = [
    "METHODS",
    "ClustererSpec",
    "standardize",
    "kmeans",
    "pam",
    "ward_hclust",
    "mixture_cluster",
    "fit_clusterer",
    "FittedClusterer",
    "KMeansClusterer",
    "PAMClusterer",
    "WardClusterer",
]

METHODS = ("mixture", "kmeans", "pam", "hc")


@dataclass(frozen=True)
class ClustererSpec:
    """``standardize`` None means the method default (True except for mixture)."""

    method: str
    k: int
    constraint: str = "homo"
    standardize: bool | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameterError(f"method must be one of {METHODS}, got {self.method!r}")
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 2:
            raise InvalidParameterError(f"k must be an integer >= 2, got {self.k!r}")
        check_constraint(self.constraint)
        if self.standardize is None:
            object.__setattr__(self, "standardize", self.method != "mixture")

    def with_k(self, k: int) -> "ClustererSpec":
        return ClustererSpec(self.method, k, self.constraint, self.standardize)


def standardize(X, columns=None) -> np.ndarray:
    """Center columns and scale them to unit sample standard deviation."""
    X = check_complete(X)
    if X.shape[0] < 2:
        raise InvalidParameterError("standardizing needs at least two rows")
    sd = X.std(axis=0, ddof=1)
    flat = np.flatnonzero(~(sd > 0))
    if flat.size:
        j = int(flat[0])
        name = columns[j] if columns is not None else f"column {j}"
        raise InvalidParameterError(f"{name} has zero variance")
    return (X - X.mean(axis=0)) / sd


def _check_k(X, k):
    n = X.shape[0]
    if k < 1 or k > n:
        raise InvalidParameterError(f"k must lie in [1, n={n}], got {k}")


# --------------------------------------------------------------------------
# k-means


def _sq_dist(X, centers):
    d = (X * X).sum(axis=1)[:, None] - 2.0 * X @ centers.T + (centers * centers).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _lloyd(X, centers, max_iter, history=None):
    n, k = X.shape[0], centers.shape[0]
    rows = np.arange(n)
    labels = None
    for _ in range(max_iter):
        d = _sq_dist(X, centers)
        new = np.argmin(d, axis=1)
        counts = np.bincount(new, minlength=k)
        # an empty cluster takes the point farthest from its current center
        for w in np.flatnonzero(counts == 0):
            far = int(np.argmax(d[rows, new]))
            new[far] = w
            d[far] = 0.0
            counts = np.bincount(new, minlength=k)
        onehot = np.zeros((n, k))
        onehot[rows, new] = 1.0
        centers = (onehot.T @ X) / counts[:, None]
        if history is not None:
            history.append(float(((X - centers[new]) ** 2).sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return labels, centers, float(((X - centers[labels]) ** 2).sum())


def kmeans(X, k: int, rng, *, n_init: int = 10, max_iter: int = 300, return_centers: bool = False,
           history: list | None = None):
    """Lloyd's algorithm from k-means++ seeds; keeps the lowest-WCSS restart.

    ``history`` (if given) receives the WCSS after every iteration of the
    winning restart.
    """
    X = check_complete(X)
    _check_k(X, k)
    rng = rand.as_generator(rng)
    best = None
    for _ in range(n_init):
        hist = [] if history is not None else None
        centers = gmm._kmeanspp_centers(X, k, rng).astype(float)
        labels, centers, wcss = _lloyd(X, centers, max_iter, hist)
        if best is None or wcss < best[2]:
            best = (labels, centers, wcss, hist)
    labels, centers, _, hist = best
    if history is not None:
        history.extend(hist)
    part = Partition(labels, k)
    return (part, centers) if return_centers else part


# --------------------------------------------------------------------------
# PAM


def _pam_cost(D, medoids):
    return float(D[:, medoids].min(axis=1).sum())


def pam(X, k: int, rng=None, *, max_swaps: int = 1000, return_medoids: bool = False, history: list | None = None):
    """Partitioning around medoids (BUILD then SWAP) on Euclidean distances.

    Deterministic; ``rng`` is accepted for interface symmetry.
    """
    X = check_complete(X)
    _check_k(X, k)
    D = cdist(X, X)
    n = D.shape[0]
    # BUILD: greedy additions that most reduce the total dissimilarity
    medoids = [int(np.argmin(D.sum(axis=0)))]
    nearest = D[:, medoids[0]].copy()
    for _ in range(1, k):
        gain = np.maximum(nearest[:, None] - D, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        m = int(np.argmax(gain))
        medoids.append(m)
        nearest = np.minimum(nearest, D[:, m])
    medoids = np.array(medoids)
    cost = _pam_cost(D, medoids)
    if history is not None:
        history.append(cost)
    for _ in range(max_swaps):
        dm = D[:, medoids]
        order = np.argsort(dm, axis=1, kind="stable")
        first = dm[np.arange(n), order[:, 0]]
        second = dm[np.arange(n), order[:, 1]] if k > 1 else np.full(n, np.inf)
        best_delta, best_pair = -1e-12 * max(cost, 1.0), None
        for slot in range(k):
            # rows currently served by this medoid fall back to their second choice
            served = order[:, 0] == slot
            base = np.where(served, second, first)
            new_cost = np.minimum(base[:, None], D).sum(axis=0) - first.sum()
            new_cost[medoids] = np.inf
            h = int(np.argmin(new_cost))
            if new_cost[h] < best_delta:
                best_delta, best_pair = new_cost[h], (slot, h)
        if best_pair is None:
            break
        medoids[best_pair[0]] = best_pair[1]
        cost = _pam_cost(D, medoids)
        if history is not None:
            history.append(cost)
    labels = np.argmin(D[:, medoids], axis=1)
    part = Partition(labels, k)
    return (part, medoids) if return_medoids else part


# --------------------------------------------------------------------------
# Ward


def ward_linkage(X) -> np.ndarray:
    """Merge table in scipy's format: ``(n-1, 4)`` rows of (a, b, height, size).

    Heights follow the Lance-Williams recurrence for Ward's criterion on
    Euclidean distances, matching ``scipy.cluster.hierarchy.ward``.
    """
    X = check_complete(X)
    n = X.shape[0]
    D = cdist(X, X)
    np.fill_diagonal(D, np.inf)
    size = np.ones(n)
    ids = np.arange(n)
    active = np.ones(n, dtype=bool)
    out = np.empty((max(n - 1, 0), 4))
    for step in range(n - 1):
        flat = int(np.argmin(D))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        h = D[i, j]
        out[step] = (min(ids[i], ids[j]), max(ids[i], ids[j]), h, size[i] + size[j])
        others = active.copy()
        others[[i, j]] = False
        si, sj, sk = size[i], size[j], size[others]
        tot = si + sj + sk
        upd = np.sqrt(((si + sk) * D[i, others] ** 2 + (sj + sk) * D[j, others] ** 2 - sk * h**2) / tot)
        D[i, others] = upd
        D[others, i] = upd
        D[j, :] = np.inf
        D[:, j] = np.inf
        active[j] = False
        size[i] = si + sj
        ids[i] = n + step
    return out


def _cut(linkage, n, k):
    parent = np.arange(2 * n - 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for step in range(n - k):
        a, b = int(linkage[step, 0]), int(linkage[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    roots = np.array([find(i) for i in range(n)])
    # number clusters by first appearance
    _, first, inv = np.unique(roots, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inv.reshape(-1)]


def ward_hclust(X, k: int, rng=None) -> Partition:
    """Ward agglomeration cut at ``k`` clusters."""
    X = check_complete(X)
    _check_k(X, k)
    n = X.shape[0]
    if k == n:
        return Partition(np.arange(n), k)
    return Partition(_cut(ward_linkage(X), n, k), k)


def mixture_cluster(X, k: int, constraint: str = "homo", rng=None) -> Partition:
    X = check_complete(X)
    params = gmm.em_fit(X, k, constraint, rng)
    return gmm.classify(params, X)


# --------------------------------------------------------------------------
# fitted clusterers with an extension rule


@dataclass
class FittedClusterer:
    """Partition of the fitting rows plus a rule that labels new rows.

    ``centers`` (k-means, Ward) or ``medoids`` (PAM rows) give nearest-point
    extension; ``params`` gives posterior-argmax extension.  ``shift`` and
    ``scale`` map new rows onto the scale the clustering was fitted on.
    """

    spec: ClustererSpec
    partition: Partition
    centers: np.ndarray | None = None
    params: gmm.MixtureParams | None = None
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None

    def scores(self, X) -> np.ndarray:
        """Larger is better; ``(n, k)``."""
        X = check_complete(X)
        if self.scale is not None:
            X = (X - self.shift) / self.scale
        if self.params is not None:
            return gmm.log_scores(self.params, X, np.ones(X.shape, dtype=bool))
        return -_sq_dist(X, self.centers)

    def predict(self, X, rng=None) -> np.ndarray:
        """Best-scoring cluster; exact ties go to the lowest index, or are
        broken uniformly at random when ``rng`` is given."""
        s = self.scores(X)
        if rng is None:
            return np.argmax(s, axis=1)
        rng = rand.as_generator(rng)
        top = s == s.max(axis=1, keepdims=True)
        u = rng.random(s.shape) * top
        return np.argmax(u, axis=1)


def fit_clusterer(X, spec: ClustererSpec, rng, *, prestandardized: bool = False) -> FittedClusterer:
    """Cluster ``X`` according to ``spec``.

    Set ``prestandardized`` when ``X`` is already on the standardized scale
    (the bootstrap loop standardizes once up front).
    """
    X = check_complete(X)
    shift = scale = None
    if spec.standardize and not prestandardized:
        Z = standardize(X)
        shift, scale = X.mean(axis=0), X.std(axis=0, ddof=1)
        X = Z
    k = spec.k
    if spec.method == "mixture":
        params = gmm.em_fit(X, k, spec.constraint, rng)
        return FittedClusterer(spec, gmm.classify(params, X), params=params, shift=shift, scale=scale)
    if spec.method == "kmeans":
        part, centers = kmeans(X, k, rng, return_centers=True)
    elif spec.method == "pam":
        part, medoids = pam(X, k, return_medoids=True)
        centers = X[medoids].copy()
    else:
        part = ward_hclust(X, k)
        centers = np.stack([X[part.labels == w].mean(axis=0) for w in range(k)])
    return FittedClusterer(spec, part, centers=centers, shift=shift, scale=scale)


def cluster(X, spec: ClustererSpec, rng) -> Partition:
    return fit_clusterer(X, spec, rng).partition


class _SpecClusterer(ClusterMixin, BaseEstimator):
    _method = ""

    def _spec(self):
        return ClustererSpec(self._method, self.n_clusters, getattr(self, "constraint", "homo"), self.standardize)

    def fit(self, X, y=None):
        X = check_complete(X)
        self.fitted_ = fit_clusterer(X, self._spec(), rand.as_generator(self.random_state))
        self.labels_ = self.fitted_.partition.labels
        return self

    def predict(self, X):
        return self.fitted_.predict(X)


class KMeansClusterer(_SpecClusterer):
    """k-means on (by default) standardized columns; predicts by nearest centroid."""

    _method = "kmeans"

    def __init__(self, n_clusters=3, standardize=True, random_state=0):
        self.n_clusters = n_clusters
        self.standardize = standardize
        self.random_state = random_state


class PAMClusterer(_SpecClusterer):
    _method = "pam"

    def __init__(self, n_clusters=3, standardize=True, random_state=0):
        self.n_clusters = n_clusters
        self.standardize = standardize
        self.random_state = random_state


class WardClusterer(_SpecClusterer):
    _method = "hc"

    def __init__(self, n_clusters=3, standardize=True, random_state=0):
        self.n_clusters = n_clusters
        self.standardize = standardize
        self.random_state = random_state
