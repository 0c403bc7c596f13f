from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest
from scipy.cluster.hierarchy import linkage

from micluster import rand
from micluster.clustering import (
    ClustererSpec,
    KMeansClusterer,
    PAMClusterer,
    WardClusterer,
    fit_clusterer,
    kmeans,
    mixture_cluster,
    pam,
    standardize,
    ward_hclust,
    ward_linkage,
)
from micluster.exceptions import InvalidParameterError
from micluster.harness.models import generate_model, model_spec
from micluster.pooling import ari


def _two_blobs(seed, n=30, dist=10.0):
    rng = rand.as_generator(seed)
    X = 0.1 * rng.standard_normal((2 * n, 2))
    X[n:] += dist
    return X, np.repeat([0, 1], n)


def test_standardize_moments():
    X = rand.as_generator(0).standard_normal((50, 3)) * [1, 5, 0.1] + [3, -2, 7]
    Z = standardize(X)
    assert np.abs(Z.mean(axis=0)).max() < 1e-10
    assert np.abs(Z.std(axis=0, ddof=1) - 1).max() < 1e-10
    assert np.allclose(standardize(Z), Z, atol=1e-10)


def test_standardize_hand_oracle():
    assert np.allclose(standardize(np.array([[0.0], [2.0]]))[:, 0], [-np.sqrt(0.5), np.sqrt(0.5)])


def test_standardize_affine_invariance():
    x = rand.as_generator(1).standard_normal((20, 1))
    assert np.allclose(standardize(3.5 * x - 4), standardize(x), atol=1e-12)


def test_standardize_zero_variance_names_column():
    X = np.column_stack([np.arange(4.0), np.ones(4)])
    with pytest.raises(InvalidParameterError, match="column 1"):
        standardize(X)
    with pytest.raises(InvalidParameterError, match="flat"):
        standardize(X, columns=["a", "flat"])


def test_kmeans_k_equals_n():
    X = rand.as_generator(2).standard_normal((6, 2))
    part, centers = kmeans(X, 6, 3, return_centers=True)
    assert sorted(part.labels.tolist()) == list(range(6))
    assert np.allclose(((X - centers[part.labels]) ** 2).sum(), 0.0)


def test_kmeans_two_blobs():
    X, truth = _two_blobs(4)
    assert ari(kmeans(X, 2, 5), truth) == 1.0


def test_kmeans_wcss_monotone_and_beats_truth():
    data = generate_model(model_spec("I"), 6)
    X = standardize(data.values)
    hist = []
    part = kmeans(X, 3, 7, history=hist)
    assert np.all(np.diff(hist) <= 1e-9)

    def wcss(labels):
        return sum(((X[labels == w] - X[labels == w].mean(axis=0)) ** 2).sum() for w in np.unique(labels))

    assert wcss(part.labels) <= wcss(data.ref_labels) + 1e-9


def test_pam_k1_exhaustive():
    X = rand.as_generator(8).standard_normal((25, 3))
    D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
    _, medoids = pam(X, 1, return_medoids=True)
    assert medoids.tolist() == [int(np.argmin(D.sum(axis=1)))]


def test_pam_duplicate_values():
    X = np.array([[0.0, 0.0]] * 5 + [[3.0, 1.0]] * 4)
    assert ari(pam(X, 2), [0] * 5 + [1] * 4) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_pam_matches_enumeration(seed):
    X = rand.as_generator(10 + seed).standard_normal((10, 2))
    D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
    best = min(combinations(range(10), 2), key=lambda m: D[:, list(m)].min(axis=1).sum())
    want = np.argmin(D[:, list(best)], axis=1)
    hist = []
    part, medoids = pam(X, 2, return_medoids=True, history=hist)
    assert ari(part, want) == 1.0
    assert np.isclose(D[:, medoids].min(axis=1).sum(), D[:, list(best)].min(axis=1).sum())
    assert np.all(np.diff(hist) <= 1e-12)


def test_ward_identity_and_collinear():
    X = rand.as_generator(15).standard_normal((4, 2))
    assert sorted(ward_hclust(X, 4).labels.tolist()) == [0, 1, 2, 3]
    p = ward_hclust(np.array([[0.0], [1.0], [10.0]]), 2)
    assert p.labels[0] == p.labels[1] != p.labels[2]


@pytest.mark.parametrize("seed", range(50))
def test_ward_matches_scipy_and_is_monotone(seed):
    X = rand.as_generator(100 + seed).standard_normal((15, 3))
    ours = ward_linkage(X)
    ref = linkage(X, method="ward")
    assert np.allclose(ours[:, 2], ref[:, 2])
    assert np.all(np.diff(ours[:, 2]) >= -1e-12)


def test_ward_partition_matches_scipy_cut():
    from scipy.cluster.hierarchy import fcluster

    X = rand.as_generator(16).standard_normal((40, 2))
    ref = fcluster(linkage(X, method="ward"), 4, criterion="maxclust")
    assert ari(ward_hclust(X, 4), ref) == 1.0


def test_mixture_cluster_blobs():
    X, truth = _two_blobs(17, dist=4.0)
    assert ari(mixture_cluster(X, 2, "homo", 18), truth) == 1.0


def test_spec_validation():
    with pytest.raises(InvalidParameterError):
        ClustererSpec("kmeans", 1)
    with pytest.raises(InvalidParameterError):
        ClustererSpec("spectral", 3)
    assert ClustererSpec("pam", 3).standardize is True
    assert ClustererSpec("mixture", 3).standardize is False


@pytest.mark.parametrize("method", ["kmeans", "pam", "hc", "mixture"])
def test_fitted_clusterer_extension(method):
    X, truth = _two_blobs(19, dist=6.0)
    fitted = fit_clusterer(X, ClustererSpec(method, 2), 20)
    assert ari(fitted.partition, truth) == 1.0
    assert ari(fitted.predict(X), truth) == 1.0


@pytest.mark.parametrize("method", ["kmeans", "pam", "mixture"])
def test_deterministic_given_seed(method):
    data = generate_model(model_spec("I"), 21)
    a = fit_clusterer(data.values, ClustererSpec(method, 3), 22).partition.labels
    b = fit_clusterer(data.values, ClustererSpec(method, 3), 22).partition.labels
    assert np.array_equal(a, b)


@pytest.mark.parametrize("cls", [KMeansClusterer, PAMClusterer, WardClusterer])
def test_estimators(cls):
    X, truth = _two_blobs(23, dist=6.0)
    est = cls(n_clusters=2)
    assert est.get_params()["n_clusters"] == 2
    assert ari(est.fit(X).labels_, truth) == 1.0
    assert ari(est.predict(X), truth) == 1.0
    assert ari(est.fit_predict(X), truth) == 1.0
