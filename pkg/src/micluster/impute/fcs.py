"""Fully conditional specification with a latent class variable.

Each sweep imputes the variables one at a time by Bayesian linear
regression on the other variables plus the class indicators, then
refreshes the class labels from a mixture fitted to a bootstrap resample
of the current completed data.  ``fcs_norm_impute`` drops the class
variable altogether.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg
from sklearn.base import BaseEstimator, TransformerMixin

from .. import gmm, rand
from ..exceptions import (
    ChainFailure,
    DegenerateFitError,
    InvalidParameterError,
    ParseError,
    SingularCovarianceError,
)
from ..validation import check_constraint, check_incomplete, check_positive_int, check_rows_observed
from ._base import ImputationResult, Trace

logger = logging.getLogger(__name__)

__all__ = [
    "PredictorMatrix",
    "RegressionDraw",
    "draw_blr",
    "fcs_homo_impute",
    "fcs_hetero_impute",
    "fcs_norm_impute",
    "run_fcs_chains",
    "FCSImputer",
    "load_wine_predictors",
]

_MAX_BOOTSTRAP_TRIES = 5
_RIDGE = 1e-4
_SIGMA_FLOOR = 1e-12
# the bootstrap refit is warm-started from the previous estimate
_EM_MAX_ITER = 100
_EM_TOL = 1e-5


@dataclass(frozen=True)
class PredictorMatrix:
    """``entries[j, i]`` is True when variable ``i`` predicts target ``j``."""

    entries: np.ndarray
    names: tuple | None = None

    def __post_init__(self):
        e = np.asarray(self.entries).astype(bool)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise InvalidParameterError(f"predictor matrix must be square, got {e.shape}")
        if e.diagonal().any():
            raise InvalidParameterError("a variable cannot predict itself")
        object.__setattr__(self, "entries", e)
        if self.names is not None:
            names = tuple(str(s) for s in self.names)
            if len(names) != e.shape[0]:
                raise InvalidParameterError("names do not match the matrix size")
            object.__setattr__(self, "names", names)

    @classmethod
    def full(cls, p: int) -> "PredictorMatrix":
        return cls(~np.eye(p, dtype=bool))

    @classmethod
    def from_csv(cls, path) -> "PredictorMatrix":
        """Read a 0/1 matrix with variable names on the header row and first column."""
        try:
            df = pd.read_csv(path, index_col=0)
        except (OSError, pd.errors.ParserError) as exc:
            raise ParseError(f"{path}: {exc}") from exc
        vals = df.to_numpy()
        bad = ~np.isin(vals, (0, 1))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ParseError(f"{path}: line {r + 2}, column {c + 2}: expected 0 or 1, got {vals[r, c]!r}")
        if list(df.index.astype(str)) != list(df.columns.astype(str)):
            raise ParseError(f"{path}: row and column names differ")
        return cls(vals.astype(bool), tuple(df.columns))

    def to_csv(self, path) -> None:
        names = self.names or [f"V{j + 1}" for j in range(self.p)]
        pd.DataFrame(self.entries.astype(int), index=names, columns=names).to_csv(path)

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    def predictors(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.entries[j])

    def check(self, mask: np.ndarray) -> None:
        if self.p != mask.shape[1]:
            raise InvalidParameterError(f"predictor matrix is {self.p}x{self.p} but data have {mask.shape[1]} columns")
        targets = np.flatnonzero(~mask.all(axis=0))
        orphans = [int(j) for j in targets if not self.entries[j].any()]
        if orphans:
            raise InvalidParameterError(f"incomplete variables {orphans} have no predictor")


def load_wine_predictors(mechanism: str = "mcar") -> PredictorMatrix:
    """Predictor matrices shipped for the wine data (``"mcar"`` or ``"mar"``)."""
    if mechanism not in ("mcar", "mar"):
        raise InvalidParameterError(f"mechanism must be 'mcar' or 'mar', got {mechanism!r}")
    path = Path(__file__).resolve().parent.parent / "data" / f"wine_predictors_{mechanism}.csv"
    return PredictorMatrix.from_csv(path)


@dataclass(frozen=True)
class RegressionDraw:
    beta: np.ndarray
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma}")

    def predict(self, x, rng) -> np.ndarray:
        x = np.atleast_2d(x)
        return x @ self.beta + self.sigma * rand.as_generator(rng).standard_normal(x.shape[0])


def _gram_factor(xtx):
    q = xtx.shape[0]
    try:
        chol = linalg.cholesky(xtx, lower=True, check_finite=False)
        d = np.diagonal(chol)
        if d.min() > 1e-7 * d.max():
            return chol
    except linalg.LinAlgError:
        pass
    lam = _RIDGE * np.trace(xtx) / q
    if not lam > 0:
        raise InvalidParameterError("design matrix is identically zero")
    try:
        return linalg.cholesky(xtx + lam * np.eye(q), lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise InvalidParameterError("design matrix stays singular after the ridge") from exc


def draw_blr(y, x, rng) -> RegressionDraw:
    """Posterior draw of a Gaussian linear regression under a flat prior.

    ``sigma**2 = rss / df`` with ``df ~ chi2(n - q)``, then
    ``beta ~ N(beta_hat, sigma**2 (x'x)^-1)``.  A rank-deficient Gram matrix
    gets a small ridge on its diagonal.
    """
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise InvalidParameterError("x must be 2-D with one row per response")
    n, q = x.shape
    if n <= q:
        raise InvalidParameterError(f"need more rows than columns (n={n}, q={q})")
    rng = rand.as_generator(rng)
    chol = _gram_factor(x.T @ x)
    beta_hat = linalg.cho_solve((chol, True), x.T @ y, check_finite=False)
    resid = y - x @ beta_hat
    df = rng.chisquare(n - q)
    sigma = max(np.sqrt(resid @ resid / df), _SIGMA_FLOOR)
    z = rng.standard_normal(q)
    beta = beta_hat + sigma * linalg.solve_triangular(chol, z, lower=True, trans="T", check_finite=False)
    return RegressionDraw(beta, float(sigma))


# --------------------------------------------------------------------------
# chain


def _onehot(labels, k):
    u = np.zeros((labels.size, k))
    u[np.arange(labels.size), labels] = 1.0
    return u


def _class_probs(params, Z):
    s = gmm.log_scores(params, Z, np.ones(Z.shape, dtype=bool))
    return np.exp(s - s.max(axis=1, keepdims=True))


class _Chain:
    """One FCS chain; with ``k == 1`` the class steps are skipped."""

    def __init__(self, X, mask, k, constraint, pred, init, rng):
        self.X = X
        self.mask = mask
        self.k = k
        self.constraint = constraint
        self.pred = pred
        self.rng = rng
        self.params = init
        self.trace = Trace()
        n = X.shape[0]
        self.targets = [j for j in range(X.shape[1]) if not mask[:, j].all()]
        self.predictors = {j: pred.predictors(j) for j in self.targets}
        # step 1: class draw from the EM posterior, then conditional fill-in
        Xz = np.where(mask, X, 0.0)
        probs = gmm.posterior(init, Xz, mask)[0]
        self.labels = rand.draw_categorical_rows(probs, rng) if k > 1 else np.zeros(n, dtype=np.int64)
        try:
            self.Z = gmm.draw_missing(init, Xz, mask, self.labels, rng)
        except SingularCovarianceError as exc:
            raise ChainFailure(f"initial draw: {exc}") from exc

    def _class_design(self):
        if self.k == 1:
            return np.ones((self.X.shape[0], 1))
        return _onehot(self.labels, self.k)

    def _impute_variable(self, j):
        Z, rng = self.Z, self.rng
        obs, miss = self.mask[:, j], ~self.mask[:, j]
        zpred = Z[:, self.predictors[j]]
        if self.constraint == "hetero" and self.k > 1:
            self._impute_hetero(j, zpred, obs, miss)
            return
        design = np.hstack([self._class_design(), zpred])
        draw = draw_blr(Z[obs, j], design[obs], rng)
        Z[miss, j] = draw.predict(design[miss], rng)

    def _impute_hetero(self, j, zpred, obs, miss):
        Z, rng = self.Z, self.rng
        design = np.hstack([np.ones((Z.shape[0], 1)), zpred])
        q = design.shape[1]
        pooled = None
        for w in range(self.k):
            in_w = self.labels == w
            fill = in_w & miss
            fit = in_w & obs
            if fit.sum() >= q + 2:
                draw = draw_blr(Z[fit, j], design[fit], rng)
            elif fill.any():
                if pooled is None:
                    full = np.hstack([_onehot(self.labels, self.k), zpred])
                    pooled = (full, draw_blr(Z[obs, j], full[obs], rng))
                full, pdraw = pooled
                Z[fill, j] = pdraw.predict(full[fill], rng)
                continue
            else:
                continue
            if fill.any():
                Z[fill, j] = draw.predict(design[fill], rng)

    def _refit_mixture(self):
        n = self.Z.shape[0]
        last = None
        for _ in range(_MAX_BOOTSTRAP_TRIES):
            boot = self.Z[self.rng.integers(n, size=n)]
            try:
                return gmm.em_fit(boot, self.k, self.constraint, init=self.params, max_iter=_EM_MAX_ITER, tol=_EM_TOL)
            except (DegenerateFitError, SingularCovarianceError) as exc:
                last = exc
        raise ChainFailure(f"mixture fit failed on {_MAX_BOOTSTRAP_TRIES} bootstrap samples: {last}")

    def _update_classes(self):
        k, rng = self.k, self.rng
        n = self.Z.shape[0]
        alpha = np.maximum(np.bincount(self.labels, minlength=k) / n, 1e-8)
        star = self._refit_mixture()
        self.params = star
        try:
            probs = _class_probs(star, self.Z)
        except SingularCovarianceError as exc:
            raise ChainFailure(str(exc)) from exc
        w_star = rand.draw_categorical_rows(probs, rng)
        theta = rand.draw_dirichlet(alpha + np.bincount(w_star, minlength=k), rng)
        redraw = gmm.MixtureParams(theta, star.means, star.covs, star.constraint)
        self.labels = rand.draw_categorical_rows(_class_probs(redraw, self.Z), rng)
        cov_tr = np.trace(star.covs) if star.constraint == "homo" else np.trace(star.covs, axis1=1, axis2=2).mean()
        self.trace.record(theta, star.means, cov_tr)

    def run(self, n_iter):
        for _ in range(n_iter):
            for j in self.targets:
                try:
                    self._impute_variable(j)
                except InvalidParameterError as exc:
                    raise ChainFailure(f"variable {j}: {exc}") from exc
            if self.k > 1:
                self._update_classes()
            else:
                self.trace.record([1.0], self.Z.mean(axis=0)[None], np.trace(np.cov(self.Z.T)))
        return np.where(self.mask, self.X, self.Z)


def _prepare(data, k, l, m, pred):
    X, mask = check_incomplete(data)
    check_rows_observed(mask)
    k = check_positive_int(k, "k")
    l = check_positive_int(l, "l")
    m = check_positive_int(m, "m")
    if pred is None:
        pred = PredictorMatrix.full(X.shape[1])
    elif not isinstance(pred, PredictorMatrix):
        pred = PredictorMatrix(pred)
    pred.check(mask)
    return X, mask, k, l, m, pred


def run_fcs_chains(data, k, l, seeds, constraint="homo", pred=None, init=None, init_rng=0) -> ImputationResult:
    """One chain per entry of ``seeds``; ``constraint`` None drops the class variable.

    ``init`` is the incomplete-data mixture fit shared by the chains; when
    omitted it is computed with ``init_rng``.
    """
    seeds = list(seeds)
    X, mask, k, l, _, pred = _prepare(data, k, l, max(len(seeds), 1), pred)
    if constraint is None:
        k, constraint = 1, "homo"
    check_constraint(constraint)
    if k == 1:
        # one class: both constraints describe the same model
        constraint = "homo"
    if mask.all():
        return ImputationResult([X.copy() for _ in seeds], [])
    if init is None:
        init = gmm.em_fit_incomplete(X, k, constraint, rand.as_generator(init_rng))
    completed, traces = [], []
    for seed in seeds:
        chain = _Chain(X, mask, k, constraint, pred, init, rand.as_generator(seed))
        completed.append(chain.run(l))
        traces.append(chain.trace)
    return ImputationResult(completed, traces)


def _fcs(data, k, l, m, pred, rng, constraint, engine):
    X, mask, k, l, m, pred = _prepare(data, k, l, m, pred)
    rng = rand.as_generator(rng)
    if mask.all():
        return ImputationResult([X.copy() for _ in range(m)], [], engine)
    fit_constraint = constraint if k > 1 else "homo"
    init = gmm.em_fit_incomplete(X, k, fit_constraint, rng)
    result = run_fcs_chains(X, k, l, rand.spawn(rng, m), constraint, pred, init)
    result.engine = engine
    return result


def fcs_homo_impute(data, k: int = 3, l: int = 200, m: int = 20, pred=None, rng=None) -> ImputationResult:
    """FCS with a latent class and homoscedastic class-wise regressions."""
    return _fcs(data, k, l, m, pred, rng, "homo", "fcs_homo")


def fcs_hetero_impute(data, k: int = 3, l: int = 200, m: int = 20, pred=None, rng=None) -> ImputationResult:
    """FCS with a latent class and one regression per class."""
    return _fcs(data, k, l, m, pred, rng, "hetero", "fcs_hetero")


def fcs_norm_impute(data, l: int = 20, m: int = 20, pred=None, rng=None) -> ImputationResult:
    """Chained linear-regression imputation without a class variable."""
    return _fcs(data, 1, l, m, pred, rng, "homo", "fcs_norm")


class FCSImputer(TransformerMixin, BaseEstimator):
    """FCS imputer with a latent class variable.

    Parameters
    ----------
    model : {"homo", "hetero", "norm"}
        Class-wise regressions with a shared residual variance, one
        regression per class, or no class variable.
    n_clusters : int
        Ignored when ``model="norm"``.
    n_iter : int or None
        Sweeps per chain; None picks 200 (20 for ``"norm"``).
    predictors : PredictorMatrix, array or None
    """

    def __init__(self, model="homo", n_clusters=3, n_imputations=20, n_iter=None, predictors=None, random_state=0):
        self.model = model
        self.n_clusters = n_clusters
        self.n_imputations = n_imputations
        self.n_iter = n_iter
        self.predictors = predictors
        self.random_state = random_state

    def fit(self, X, y=None):
        rng = rand.as_generator(self.random_state)
        if self.model == "norm":
            l = 20 if self.n_iter is None else self.n_iter
            result = fcs_norm_impute(X, l, self.n_imputations, self.predictors, rng)
        elif self.model in ("homo", "hetero"):
            l = 200 if self.n_iter is None else self.n_iter
            fn = fcs_homo_impute if self.model == "homo" else fcs_hetero_impute
            result = fn(X, self.n_clusters, l, self.n_imputations, self.predictors, rng)
        else:
            raise InvalidParameterError(f"model must be 'homo', 'hetero' or 'norm', got {self.model!r}")
        self.result_ = result
        self.imputations_ = result.completed
        return self

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).result_.stack()

    def transform(self, X):
        raise NotImplementedError("imputations are tied to the fitted data; use fit_transform")
