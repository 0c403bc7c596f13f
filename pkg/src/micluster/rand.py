"""Seeded draws for the samplers.

Every function takes an ``rng`` that may be an integer seed or a
:class:`numpy.random.Generator`.  Integer seeds are turned into PCG64
generators, so the same seed and the same sequence of calls always give
bit-identical draws.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg

from .exceptions import InvalidParameterError

__all__ = [
    "as_generator",
    "derive",
    "spawn",
    "draw_dirichlet",
    "draw_inverse_wishart",
    "draw_mvnormal",
    "draw_categorical",
    "draw_categorical_rows",
    "cholesky_jitter",
]


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise InvalidParameterError("an explicit seed or Generator is required")
    if isinstance(rng, (int, np.integer)):
        if rng < 0 or rng >= 2**64:
            raise InvalidParameterError(f"seed must be a 64-bit unsigned integer, got {rng}")
        return np.random.Generator(np.random.PCG64(int(rng)))
    if isinstance(rng, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(rng))
    raise InvalidParameterError(f"cannot build a generator from {type(rng).__name__}")


def derive(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for ``(master_seed, *keys)``.

    The key tuple is hashed by :class:`numpy.random.SeedSequence`, so the
    stream for replicate ``r`` does not depend on which other replicates run.
    """
    entropy = [int(master_seed)] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def spawn(rng, n: int) -> list[np.random.Generator]:
    """``n`` child generators derived from one draw of ``rng``."""
    rng = as_generator(rng)
    base = int(rng.integers(0, 2**63))
    return [derive(base, i) for i in range(n)]


def draw_dirichlet(alpha, rng) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size == 0:
        raise InvalidParameterError("alpha must be a non-empty vector")
    if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
        raise InvalidParameterError(f"Dirichlet parameters must be > 0, got {alpha}")
    rng = as_generator(rng)
    g = rng.standard_gamma(alpha)
    total = g.sum()
    if total <= 0:
        # every gamma draw underflowed (tiny alphas); fall back to the largest
        out = np.zeros_like(alpha)
        out[int(np.argmax(alpha))] = 1.0
        return out
    return g / total


def cholesky_jitter(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retrying once with a small ridge on failure."""
    try:
        return linalg.cholesky(cov, lower=True, check_finite=False)
    except linalg.LinAlgError:
        p = cov.shape[0]
        jitter = 1e-8 * np.trace(cov) / p
        if not jitter > 0:
            raise
        return linalg.cholesky(cov + jitter * np.eye(p), lower=True, check_finite=False)


def _check_spd(mat: np.ndarray, name: str) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidParameterError(f"{name} must be square")
    scale = max(np.abs(mat).max(), 1e-300)
    if np.abs(mat - mat.T).max() > 1e-10 * scale:
        raise InvalidParameterError(f"{name} is not symmetric")


def draw_inverse_wishart(df: float, scale, rng) -> np.ndarray:
    """Draw from the inverse Wishart with mean ``scale / (df - p - 1)``.

    Uses the Bartlett factor ``B`` of a standard Wishart: with
    ``scale = C C'`` the draw is ``C (B B')^{-1} C'``.
    """
    scale = np.asarray(scale, dtype=float)
    _check_spd(scale, "scale")
    p = scale.shape[0]
    if not df > p - 1:
        raise InvalidParameterError(f"inverse Wishart needs df > p - 1 (df={df}, p={p})")
    try:
        c = linalg.cholesky(scale, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise InvalidParameterError("scale matrix is not positive definite") from exc
    rng = as_generator(rng)
    b = np.zeros((p, p))
    b[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    tril = np.tril_indices(p, -1)
    b[tril] = rng.standard_normal(len(tril[0]))
    # X = C B^{-T}, so X X' = C (B B')^{-1} C'
    xt = linalg.solve_triangular(b, c.T, lower=True, check_finite=False)
    out = xt.T @ xt
    return 0.5 * (out + out.T)


def draw_mvnormal(mean, cov, rng, size: int | None = None) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    p = mean.shape[0]
    if cov.shape != (p, p):
        raise InvalidParameterError(f"mean has length {p} but cov has shape {cov.shape}")
    rng = as_generator(rng)
    shape = (p,) if size is None else (size, p)
    if not np.any(cov):
        return np.broadcast_to(mean, shape).copy()
    chol = cholesky_jitter(cov)
    eps = rng.standard_normal(shape)
    return mean + eps @ chol.T


def draw_categorical(probs, rng) -> int:
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0):
        raise InvalidParameterError("categorical probabilities must be nonnegative")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidParameterError(f"probabilities sum to {probs.sum()}, not 1")
    rng = as_generator(rng)
    return int(draw_categorical_rows(probs[None, :], rng)[0])


def draw_categorical_rows(probs: np.ndarray, rng) -> np.ndarray:
    """One categorical draw per row of an ``(n, K)`` probability matrix.

    Rows need not be normalized.  Uses one uniform per row.
    """
    rng = as_generator(rng)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cum[:, -1]
    idx = (cum <= u[:, None]).sum(axis=1)
    # guard against u landing on the rounding tail of the last bucket
    return np.minimum(idx, probs.shape[1] - 1)
