"""Gaussian mixtures: EM fitting, discriminant scores and conditional draws.

Rows may be partially observed.  Everything that touches an incomplete row
works on the observed coordinates only, grouping rows that share the same
missingness pattern so each restricted covariance is factorized once.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, ClusterMixin

from . import rand
from .exceptions import DegenerateFitError, InvalidParameterError, SingularCovarianceError
from .validation import check_constraint, check_complete, check_incomplete

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
# lower bound on covariance eigenvalues, relative to the mean column variance
EIG_FLOOR = 1e-3

__all__ = [
    "MixtureParams",
    "Partition",
    "em_fit",
    "em_fit_incomplete",
    "log_scores",
    "posterior",
    "discriminant_scores",
    "classify",
    "draw_conditional_missing",
    "draw_missing",
    "GaussianMixtureClassifier",
]


@dataclass(frozen=True)
class Partition:
    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise InvalidParameterError("labels must be a vector")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise InvalidParameterError(f"labels must lie in [0, {self.k})")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        labels = np.asarray(labels, dtype=np.int64)
        return cls(labels, int(labels.max()) + 1 if labels.size else 0)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def onehot(self) -> np.ndarray:
        u = np.zeros((self.n, self.k))
        u[np.arange(self.n), self.labels] = 1.0
        return u

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


@dataclass(frozen=True)
class MixtureParams:
    """Weights ``(K,)``, means ``(K, p)`` and covariances.

    ``covs`` has shape ``(p, p)`` when ``constraint == "homo"`` and
    ``(K, p, p)`` when ``constraint == "hetero"``.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    constraint: str = "homo"
    loglik: float = field(default=np.nan, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covs, dtype=float)
        check_constraint(self.constraint)
        k, p = mu.shape
        if w.shape != (k,):
            raise InvalidParameterError("weights and means disagree on K")
        if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
            raise InvalidParameterError(f"weights must lie on the simplex, got {w}")
        want = (p, p) if self.constraint == "homo" else (k, p, p)
        if cov.shape != want:
            raise InvalidParameterError(f"covs has shape {cov.shape}, expected {want}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def p(self) -> int:
        return self.means.shape[1]

    def cov(self, w: int) -> np.ndarray:
        return self.covs if self.constraint == "homo" else self.covs[w]

    def cov_stack(self) -> np.ndarray:
        if self.constraint == "homo":
            return np.broadcast_to(self.covs, (self.k, self.p, self.p))
        return self.covs


# --------------------------------------------------------------------------
# missingness patterns


class Patterns:
    """Distinct row missingness patterns of a mask.

    ``unique`` is ``(G, p)`` (True = observed) and ``index`` maps each row to
    its pattern.
    """

    def __init__(self, mask):
        mask = np.asarray(mask, dtype=bool)
        self.mask = mask
        if mask.all():
            self.unique = np.ones((1, mask.shape[1]), dtype=bool)
            self.index = np.zeros(mask.shape[0], dtype=np.int64)
        else:
            self.unique, inv = np.unique(mask, axis=0, return_inverse=True)
            self.index = inv.reshape(-1)
        self.obs = self.unique.astype(float)
        self.n_obs = self.unique.sum(axis=1)

    @property
    def complete(self) -> bool:
        return bool(self.unique.all())

    def __len__(self):
        return self.unique.shape[0]


def _row_logsumexp(s):
    top = s.max(axis=1, keepdims=True)
    return top + np.log(np.exp(s - top).sum(axis=1, keepdims=True))


def _as_patterns(mask, patterns):
    if patterns is not None:
        return patterns
    return Patterns(mask)


def _embed_blocks(cov, patterns):
    """Observed block of ``cov`` per pattern, identity on the missing block."""
    o = patterns.obs
    eye = np.eye(cov.shape[-1])
    return cov * (o[:, :, None] * o[:, None, :]) + eye * (1.0 - o)[:, None, :]


def _batched_cholesky(mats, component=None):
    try:
        return np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        where = "shared covariance" if component is None else f"component {component}"
        raise SingularCovarianceError(f"restricted covariance of {where} is singular", component)


class _Restricted:
    """Per-pattern inverses and log-determinants of one covariance matrix."""

    def __init__(self, cov, patterns, component=None):
        self.cov = cov
        self.patterns = patterns
        self.component = component
        blocks = _embed_blocks(cov, patterns)
        chol = _batched_cholesky(blocks, component)
        self.logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        o = patterns.obs
        self.prec = np.linalg.inv(blocks) * (o[:, :, None] * o[:, None, :])
        self._resid = None

    def coef(self):
        """``cov @ prec``: rows of missing coords hold ``S_mo S_oo^-1``."""
        return self.cov @ self.prec

    def resid(self):
        """Conditional covariance of the missing block (zero elsewhere)."""
        if self._resid is None:
            m = 1.0 - self.patterns.obs
            r = self.cov - self.cov @ self.prec @ self.cov
            r = 0.5 * (r + np.swapaxes(r, 1, 2))
            self._resid = r * (m[:, :, None] * m[:, None, :])
        return self._resid


def _restricted(params, patterns):
    if params.constraint == "homo":
        shared = _Restricted(params.covs, patterns)
        return [shared] * params.k
    return [_Restricted(params.covs[w], patterns, w) for w in range(params.k)]


def log_scores(params: MixtureParams, X, mask=None, patterns=None, _restr=None) -> np.ndarray:
    """``log theta_w + log f_w(x_obs)`` for every row and component.

    Fully missing rows get ``log theta_w``.
    """
    X = np.asarray(X, dtype=float)
    if mask is None and patterns is None:
        mask = ~np.isnan(X)
    patterns = _as_patterns(mask, patterns)
    restr = _restr if _restr is not None else _restricted(params, patterns)
    if patterns.complete:
        return _complete_scores(params, X)
    idx = patterns.index
    o_rows = patterns.obs[idx]
    Xz = np.where(o_rows > 0, X, 0.0)
    logw = np.log(np.maximum(params.weights, 1e-300))
    const = -0.5 * patterns.n_obs[idx] * LOG_2PI
    out = np.empty((X.shape[0], params.k))
    complete = patterns.complete
    for w in range(params.k):
        r = restr[w]
        d = Xz - params.means[w]
        if complete:
            q = ((d @ r.prec[0]) * d).sum(axis=1)
        else:
            d *= o_rows
            q = np.einsum("ni,nij,nj->n", d, r.prec[idx], d)
        out[:, w] = -0.5 * q - 0.5 * r.logdet[idx] + const + logw[w]
    return out


def _complete_scores(params, X):
    """``log_scores`` for fully observed rows via Cholesky whitening."""
    n, p = X.shape
    const = -0.5 * p * LOG_2PI + np.log(np.maximum(params.weights, 1e-300))
    if params.constraint == "homo":
        chol = _batched_cholesky(params.covs[None])[0]
        y = linalg.solve_triangular(chol, X.T, lower=True, check_finite=False)
        c = linalg.solve_triangular(chol, params.means.T, lower=True, check_finite=False)
        d2 = (y * y).sum(axis=0)[:, None] - 2.0 * (y.T @ c) + (c * c).sum(axis=0)[None, :]
        logdet = 2.0 * np.log(np.diagonal(chol)).sum()
        return -0.5 * np.maximum(d2, 0.0) - 0.5 * logdet + const
    chols = _batched_cholesky(params.covs)
    out = np.empty((n, params.k))
    for w in range(params.k):
        y = linalg.solve_triangular(chols[w], (X - params.means[w]).T, lower=True, check_finite=False)
        logdet = 2.0 * np.log(np.diagonal(chols[w])).sum()
        out[:, w] = -0.5 * (y * y).sum(axis=0) - 0.5 * logdet + const[w]
    return out


def posterior(params: MixtureParams, X, mask=None, patterns=None):
    """Class posterior probabilities ``(n, K)`` and the observed-data log-likelihood."""
    s = log_scores(params, X, mask, patterns)
    norm = _row_logsumexp(s)
    return np.exp(s - norm), float(norm.sum())


def discriminant_scores(params: MixtureParams, row, observed=None) -> np.ndarray:
    """Posterior class probabilities of one row from its observed coordinates.

    Under ``homo`` this is the linear discriminant restricted to the observed
    block; under ``hetero`` the quadratic one.  A fully missing row returns
    the mixture weights.
    """
    row = np.asarray(row, dtype=float)
    if observed is None:
        observed = ~np.isnan(row)
    observed = np.asarray(observed, dtype=bool)
    if row.shape != (params.p,) or observed.shape != (params.p,):
        raise InvalidParameterError("row length does not match the mixture dimension")
    if not observed.any():
        return params.weights.copy()
    probs, _ = posterior(params, row[None, :], observed[None, :])
    return probs[0]


def classify(params: MixtureParams, X) -> Partition:
    X = check_complete(X)
    if X.shape[1] != params.p:
        raise InvalidParameterError("data and mixture dimensions differ")
    s = log_scores(params, X, np.ones(X.shape, dtype=bool))
    # np.argmax returns the first maximum: ties go to the lowest index
    return Partition(np.argmax(s, axis=1), params.k)


# --------------------------------------------------------------------------
# conditional draws


def _conditional_means(params, Xz, patterns, restr, w):
    """Conditional expectation of every row under component ``w`` (full vectors)."""
    idx = patterns.index
    d = (Xz - params.means[w]) * patterns.obs[idx]
    coef = restr[w].coef()
    if patterns.complete:
        return params.means[w] + d @ coef[0].T
    return params.means[w] + np.einsum("nij,nj->ni", coef[idx], d)


def _resid_factors(resid, patterns):
    """Cholesky factors of the missing-block residual covariances (per pattern)."""
    o = patterns.obs
    eye = np.eye(resid.shape[-1])
    mats = resid + eye * o[:, None, :]
    try:
        return np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        return np.stack([rand.cholesky_jitter(m) for m in mats])


def draw_missing(params: MixtureParams, X, mask, labels, rng, patterns=None, _restr=None) -> np.ndarray:
    """Fill every missing cell from the within-class conditional normal."""
    X = np.array(X, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    labels = np.asarray(labels)
    rng = rand.as_generator(rng)
    patterns = _as_patterns(mask, patterns)
    if patterns.complete:
        return X
    restr = _restr if _restr is not None else _restricted(params, patterns)
    Xz = np.where(mask, X, 0.0)
    idx = patterns.index
    eps = rng.standard_normal(X.shape)
    fill = np.empty_like(X)
    comps = [0] if params.constraint == "homo" else range(params.k)
    factors = {w: _resid_factors(restr[w].resid(), patterns) for w in comps}
    for w in range(params.k):
        sel = np.flatnonzero(labels == w)
        if sel.size == 0:
            continue
        cmean = _conditional_means(params, Xz[sel], _SubPatterns(patterns, sel), restr, w)
        fac = factors[0 if params.constraint == "homo" else w]
        fill[sel] = cmean + np.einsum("nij,nj->ni", fac[idx[sel]], eps[sel])
    return np.where(mask, X, fill)


class _SubPatterns:
    """View of :class:`Patterns` restricted to a subset of rows."""

    def __init__(self, patterns, rows):
        self.unique = patterns.unique
        self.obs = patterns.obs
        self.n_obs = patterns.n_obs
        self.index = patterns.index[rows]
        self.complete = patterns.complete


def draw_conditional_missing(params: MixtureParams, row, observed, label: int, rng) -> np.ndarray:
    row = np.asarray(row, dtype=float)
    observed = np.asarray(observed, dtype=bool)
    if not 0 <= label < params.k:
        raise InvalidParameterError(f"label {label} outside [0, {params.k})")
    if observed.all():
        return row.copy()
    return draw_missing(params, row[None, :], observed[None, :], np.array([label]), rng)[0]


# --------------------------------------------------------------------------
# EM


def _kmeanspp_centers(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _kmeanspp_resp(X, k, rng):
    centers = _kmeanspp_centers(X, k, rng)
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((X.shape[0], k))
    resp[np.arange(X.shape[0]), np.argmin(d2, axis=1)] = 1.0
    return resp


def _floor_cov(cov, scale):
    """Clip eigenvalues from below at ``EIG_FLOOR * scale``.

    Clipping is the exact M-step under a lower bound on the eigenvalues, so
    EM stays monotone while spiked components on collinear rows are ruled
    out.
    """
    vals, vecs = np.linalg.eigh(cov)
    floor = EIG_FLOOR * scale
    if vals.min() >= floor:
        return cov
    out = (vecs * np.maximum(vals, floor)) @ vecs.T
    return 0.5 * (out + out.T)


def _m_step(resp, xhat, ccov, constraint, diag_scale):
    """Weighted moments from responsibilities.

    ``xhat`` is ``(K, n, p)`` conditional expectations (or ``(n, p)`` when all
    rows are complete) and ``ccov`` ``(K, p, p)`` the summed conditional
    covariances weighted by responsibilities, or ``None``.
    """
    n, k = resp.shape
    nk = resp.sum(axis=0)
    weights = nk / n
    p = xhat.shape[-1]
    if xhat.ndim == 2 and ccov is None:
        return _m_step_complete(resp, xhat, nk, constraint, diag_scale)
    means = np.empty((k, p))
    scatter = np.empty((k, p, p))
    for w in range(k):
        xw = xhat if xhat.ndim == 2 else xhat[w]
        means[w] = resp[:, w] @ xw / nk[w]
        diff = xw - means[w]
        scatter[w] = (diff * resp[:, w, None]).T @ diff
        if ccov is not None:
            scatter[w] += ccov[w]
    if constraint == "homo":
        cov = scatter.sum(axis=0) / n
        cov = _floor_cov(0.5 * (cov + cov.T), diag_scale)
    else:
        cov = np.empty_like(scatter)
        for w in range(k):
            c = scatter[w] / nk[w]
            cov[w] = _floor_cov(0.5 * (c + c.T), diag_scale)
    return MixtureParams(weights / weights.sum(), means, cov, constraint)


def _m_step_complete(resp, X, nk, constraint, diag_scale):
    n = X.shape[0]
    means = (resp.T @ X) / nk[:, None]
    if constraint == "homo":
        cov = (X.T @ X - (means.T * nk) @ means) / n
        cov = _floor_cov(0.5 * (cov + cov.T), diag_scale)
    else:
        cov = np.empty((resp.shape[1], X.shape[1], X.shape[1]))
        for w in range(resp.shape[1]):
            diff = X - means[w]
            c = (diff * resp[:, w, None]).T @ diff / nk[w]
            cov[w] = _floor_cov(0.5 * (c + c.T), diag_scale)
    weights = nk / n
    return MixtureParams(weights / weights.sum(), means, cov, constraint)


def _reseed_empty(resp, min_mass):
    """Move empty components onto the worst-explained rows."""
    nk = resp.sum(axis=0)
    empty = np.flatnonzero(nk < min_mass)
    if empty.size == 0:
        return resp, False
    resp = resp.copy()
    order = np.argsort(resp.max(axis=1), kind="stable")
    for w, i in zip(empty, order):
        resp[i] = 0.0
        resp[i, w] = 1.0
    return resp, True


def _e_step(params, X, patterns, complete):
    """Responsibilities, loglik and (for incomplete rows) conditional moments."""
    if complete:
        s = _complete_scores(params, X) if patterns.complete else log_scores(params, X, None, patterns)
        norm = _row_logsumexp(s)
        return np.exp(s - norm), float(norm.sum()), X, None
    restr = _restricted(params, patterns)
    s = log_scores(params, X, None, patterns, _restr=restr)
    norm = _row_logsumexp(s)
    resp = np.exp(s - norm)
    ll = float(norm.sum())
    k, p = params.k, params.p
    xhat = np.empty((k,) + X.shape)
    ccov = np.empty((k, p, p))
    obs_rows = patterns.obs[patterns.index] > 0
    for w in range(k):
        xhat[w] = np.where(obs_rows, X, _conditional_means(params, X, patterns, restr, w))
        mass = np.bincount(patterns.index, weights=resp[:, w], minlength=len(patterns))
        ccov[w] = np.einsum("g,gij->ij", mass, restr[w].resid())
    return resp, ll, xhat, ccov


def _run_em(X, patterns, complete, init, max_iter, tol, diag_scale):
    params = init
    history = []
    prev = -np.inf
    n = X.shape[0]
    for it in range(max_iter):
        resp, ll, xhat, ccov = _e_step(params, X, patterns, complete)
        history.append(ll)
        if it > 0 and abs(ll - prev) <= tol * abs(ll):
            break
        prev = ll
        resp, reseeded = _reseed_empty(resp, 1e-6 * n)
        if reseeded:
            logger.debug("EM reseeded an empty component at iteration %d", it)
            prev = -np.inf
        params = _m_step(resp, xhat, ccov, params.constraint, diag_scale)
    else:
        history.append(_e_step(params, X, patterns, complete)[1])
    object.__setattr__(params, "loglik", history[-1])
    return params, np.array(history)


def _check_fit_input(X, k):
    if k <= 0:
        raise DegenerateFitError(f"k must be positive, got {k}")
    n = X.shape[0]
    if n <= k:
        raise DegenerateFitError(f"need more rows than components (n={n}, k={k})")


def em_fit(
    X,
    k: int,
    constraint: str = "homo",
    rng=None,
    *,
    n_init: int = 5,
    max_iter: int = 500,
    tol: float = 1e-6,
    init: MixtureParams | None = None,
    return_history: bool = False,
):
    """Maximum-likelihood mixture on complete data.

    Starts from ``n_init`` k-means++ hard assignments (or from ``init`` alone
    when given) and keeps the run with the best log-likelihood.
    """
    X = check_complete(X)
    check_constraint(constraint)
    _check_fit_input(X, k)
    if np.all(X == X[0]):
        raise DegenerateFitError("all rows are identical")
    diag_scale = float(np.mean(np.var(X, axis=0)))
    patterns = Patterns(np.ones(X.shape, dtype=bool))

    if k == 1:
        mean = X.mean(axis=0)
        diff = X - mean
        cov = _floor_cov(diff.T @ diff / X.shape[0], diag_scale)
        covs = cov if constraint == "homo" else cov[None]
        params = MixtureParams(np.ones(1), mean[None], covs, constraint)
        _, ll = posterior(params, X, None, patterns)
        object.__setattr__(params, "loglik", ll)
        return (params, np.array([ll])) if return_history else params

    starts = []
    if init is not None:
        starts.append(init)
    else:
        rng = rand.as_generator(rng)
        for _ in range(n_init):
            resp = _kmeanspp_resp(X, k, rng)
            resp, _ = _reseed_empty(resp, 0.5)
            starts.append(_m_step(resp, X, None, constraint, diag_scale))

    best, best_hist = None, None
    for start in starts:
        params, hist = _run_em(X, patterns, True, start, max_iter, tol, diag_scale)
        if best is None or params.loglik > best.loglik:
            best, best_hist = params, hist
    return (best, best_hist) if return_history else best


def em_fit_incomplete(
    X,
    k: int,
    constraint: str = "homo",
    rng=None,
    *,
    n_init: int = 5,
    max_iter: int = 200,
    tol: float = 1e-6,
    init: MixtureParams | None = None,
    return_history: bool = False,
):
    """Maximum-likelihood mixture from partially observed rows (NaN = missing).

    The E-step carries conditional means and covariances of the missing
    block for each component.  Starts from a complete-data fit on the
    column-mean-imputed matrix unless ``init`` is given.
    """
    X, mask = check_incomplete(X)
    check_constraint(constraint)
    _check_fit_input(X, k)
    if mask.all():
        return em_fit(X, k, constraint, rng, n_init=n_init, max_iter=max_iter, tol=tol,
                      init=init, return_history=return_history)
    if init is None:
        col_means = np.nanmean(X, axis=0)
        filled = np.where(mask, X, col_means)
        # a homoscedastic start: free covariances latch onto the filled-in lines
        start = em_fit(filled, k, "homo", rng, n_init=n_init, max_iter=max_iter, tol=tol)
        if constraint == "hetero":
            start = MixtureParams(start.weights, start.means, np.stack([start.covs] * k), "hetero")
        init = start
    diag_scale = float(np.mean(np.nanvar(X, axis=0)))
    patterns = Patterns(mask)
    Xz = np.where(mask, X, 0.0)
    params, hist = _run_em(Xz, patterns, False, init, max_iter, tol, diag_scale)
    return (params, hist) if return_history else params


class GaussianMixtureClassifier(ClusterMixin, BaseEstimator):
    """Mixture-model clustering: EM fit, then maximum a posteriori labels.

    Parameters
    ----------
    n_clusters : int
    constraint : {"homo", "hetero"}
        Shared or free component covariances.
    n_init : int
    random_state : int or Generator
    """

    def __init__(self, n_clusters=3, constraint="homo", n_init=5, random_state=0):
        self.n_clusters = n_clusters
        self.constraint = constraint
        self.n_init = n_init
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_complete(X)
        self.params_ = em_fit(X, self.n_clusters, self.constraint, self.random_state, n_init=self.n_init)
        self.labels_ = classify(self.params_, X).labels
        return self

    def predict(self, X):
        return classify(self.params_, X).labels

    def predict_proba(self, X):
        return posterior(self.params_, check_complete(X))[0]
