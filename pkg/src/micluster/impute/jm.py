"""Joint-model imputation by data augmentation.

The general location model treats the cluster label as a fully missing
categorical variable: given labels the rows are Gaussian with class means
and one shared covariance.  Each sweep draws labels and missing cells
(I-step), then proportions, covariance and means from their posteriors
(P-step).  With one class it reduces to imputation under a single
multivariate normal.
"""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .. import gmm, rand
from ..exceptions import ChainFailure, InvalidParameterError, SingularCovarianceError
from ..validation import check_incomplete
from ._base import ChainSpec, ImputationResult, Trace

logger = logging.getLogger(__name__)

__all__ = ["jm_gl_impute", "jm_norm_impute", "JMGLImputer", "JMNormImputer"]


def _p_step(Z, labels, k, alpha, rng):
    n, p = Z.shape
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise ChainFailure(f"class {int(np.argmin(counts))} became empty")
    df = n - p
    if not df > p - 1:
        raise ChainFailure(f"too few rows for the covariance draw (n - p = {df}, p = {p})")
    theta = rand.draw_dirichlet(alpha + counts, rng)
    mu_hat = np.zeros((k, p))
    np.add.at(mu_hat, labels, Z)
    mu_hat /= counts[:, None]
    resid = Z - mu_hat[labels]
    scatter = resid.T @ resid
    try:
        sigma = rand.draw_inverse_wishart(df, 0.5 * (scatter + scatter.T), rng)
    except InvalidParameterError as exc:
        raise ChainFailure(f"residual cross-product is singular: {exc}") from exc
    chol = rand.cholesky_jitter(sigma)
    eps = rng.standard_normal((k, p))
    means = mu_hat + (eps @ chol.T) / np.sqrt(counts)[:, None]
    return gmm.MixtureParams(theta, means, sigma, "homo")


def _data_augmentation(X, mask, spec: ChainSpec, rng, init=None):
    n, p = X.shape
    k = spec.k
    if n <= p + k:
        raise InvalidParameterError(f"need n > p + k rows (n={n}, p={p}, k={k})")
    rng = rand.as_generator(rng)
    patterns = gmm.Patterns(mask)
    if init is None:
        init = gmm.em_fit_incomplete(X, k, "homo", rng)
    params = init
    alpha = np.maximum(init.weights, 1e-8)
    trace = Trace()
    completed = []
    Xz = np.where(mask, X, 0.0)
    for it in range(1, spec.n_iter + 1):
        try:
            restr = gmm._restricted(params, patterns)
            scores = gmm.log_scores(params, Xz, None, patterns, _restr=restr)
            probs = np.exp(scores - scores.max(axis=1, keepdims=True))
            labels = rand.draw_categorical_rows(probs, rng)
            Z = gmm.draw_missing(params, Xz, mask, labels, rng, patterns, _restr=restr)
        except SingularCovarianceError as exc:
            raise ChainFailure(f"iteration {it}: {exc}") from exc
        params = _p_step(Z, labels, k, alpha, rng)
        trace.record(params.weights, params.means, np.trace(params.covs))
        if it > spec.burn_in and (it - spec.burn_in) % spec.thin == 0:
            Z = np.where(mask, X, Z)
            completed.append(Z)
    return completed, trace


def jm_gl_impute(data, spec: ChainSpec, rng, init=None) -> ImputationResult:
    """Multiple imputation under the general location model.

    ``init`` overrides the EM starting point (a homoscedastic
    :class:`~micluster.gmm.MixtureParams`).  Fully missing rows are allowed:
    their class is drawn from the weights and the row from the class model.
    """
    X, mask = check_incomplete(data)
    completed, trace = _data_augmentation(X, mask, spec, rng, init)
    return ImputationResult(completed, [trace], "jm_gl" if spec.k > 1 else "jm_norm")


def jm_norm_impute(data, spec: ChainSpec | None = None, rng=None) -> ImputationResult:
    """Multiple imputation under one multivariate normal (``k`` forced to 1)."""
    if spec is None:
        spec = ChainSpec(m=20, burn_in=500, thin=100, k=1)
    elif spec.k != 1:
        spec = ChainSpec(spec.m, spec.burn_in, spec.thin, 1)
    return jm_gl_impute(data, spec, rng)


class _ChainImputer(TransformerMixin, BaseEstimator):
    """Transductive imputer: ``fit`` runs the chain on the data it receives.

    ``fit_transform`` returns an array of shape ``(n_imputations, n, p)``.
    """

    _n_clusters = 1

    def _spec(self):
        return ChainSpec(self.n_imputations, self.burn_in, self.thin, self._n_clusters)

    def fit(self, X, y=None):
        result = jm_gl_impute(X, self._spec(), rand.as_generator(self.random_state))
        self.result_ = result
        self.imputations_ = result.completed
        return self

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).result_.stack()

    def transform(self, X):
        raise NotImplementedError("imputations are tied to the fitted data; use fit_transform")


class JMGLImputer(_ChainImputer):
    """General-location-model imputer.

    Parameters
    ----------
    n_clusters : int
    n_imputations : int
    burn_in, thin : int
        Iterations before the first saved copy and between copies.
    random_state : int or Generator
    """

    def __init__(self, n_clusters=3, n_imputations=20, burn_in=100, thin=20, random_state=0):
        self.n_clusters = n_clusters
        self.n_imputations = n_imputations
        self.burn_in = burn_in
        self.thin = thin
        self.random_state = random_state

    @property
    def _n_clusters(self):
        return self.n_clusters


class JMNormImputer(_ChainImputer):
    def __init__(self, n_imputations=20, burn_in=500, thin=100, random_state=0):
        self.n_imputations = n_imputations
        self.burn_in = burn_in
        self.thin = thin
        self.random_state = random_state
