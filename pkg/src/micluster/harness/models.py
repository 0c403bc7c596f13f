"""Gaussian mixture configurations used for the simulation studies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import rand
from ..exceptions import InvalidParameterError
from ..mechanisms import Dataset

__all__ = ["SimModelSpec", "MODELS", "model_spec", "mean_vector", "block_cov", "generate_model"]

P = 8


def mean_vector(kind: str, delta: float) -> np.ndarray:
    """Cluster centers ``a``, ``b``, ``c`` and ``-c`` at separation ``delta``."""
    d, d2 = delta, delta**2
    table = {
        "a": (0, 0, 0, 0, d, d, 0, d2),
        "b": (0, 0, 0, 0, -d, -d, -d, 0),
        "c": (0, 0, 0, 0, -d, d, d, -d2),
    }
    if kind == "-c":
        return -np.array(table["c"], dtype=float)
    if kind not in table:
        raise InvalidParameterError(f"unknown mean kind {kind!r}")
    return np.array(table[kind], dtype=float)


def block_cov(rho: float | None) -> np.ndarray:
    """``I_4`` plus an exchangeable 4x4 block with correlation ``rho``.

    ``rho=None`` gives the 8x8 identity.
    """
    cov = np.eye(P)
    if rho is not None:
        blk = np.full((4, 4), float(rho))
        np.fill_diagonal(blk, 1.0)
        cov[4:, 4:] = blk
    return cov


@dataclass(frozen=True)
class SimModelSpec:
    """``rhos`` holds one covariance setting per cluster (None = identity)."""

    model_id: str
    sizes: tuple
    delta: float
    means: tuple
    rhos: tuple

    def __post_init__(self):
        if not (len(self.sizes) == len(self.means) == len(self.rhos)) or not self.sizes:
            raise InvalidParameterError("sizes, means and rhos must have one entry per cluster")
        if any(int(s) <= 0 for s in self.sizes):
            raise InvalidParameterError("cluster sizes must be positive")

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    @property
    def constraint(self) -> str:
        return "homo" if len(set(self.rhos)) == 1 else "hetero"

    def centers(self) -> np.ndarray:
        return np.stack([mean_vector(m, 2.0 if m == "-c" else self.delta) for m in self.means])

    def covariances(self) -> np.ndarray:
        return np.stack([block_cov(r) for r in self.rhos])


_ABC = ("a", "b", "c")
MODELS = {
    "I": SimModelSpec("I", (250, 250, 250), 2.0, _ABC, (0.3,) * 3),
    "II": SimModelSpec("II", (250, 250, 250), 1.5, _ABC, (0.3,) * 3),
    "III": SimModelSpec("III", (250, 250, 250), 2.5, _ABC, (0.3,) * 3),
    "IV": SimModelSpec("IV", (250, 250), 2.0, ("a", "b"), (0.3,) * 2),
    "V": SimModelSpec("V", (250,) * 4, 2.0, _ABC + ("-c",), (0.3,) * 4),
    "VI": SimModelSpec("VI", (400, 400, 400), 2.0, _ABC, (0.3,) * 3),
    "VII": SimModelSpec("VII", (100, 100, 100), 2.0, _ABC, (0.3,) * 3),
    "VIII": SimModelSpec("VIII", (250, 250, 100), 2.0, _ABC, (0.3,) * 3),
    "IX": SimModelSpec("IX", (400, 250, 250), 2.0, _ABC, (0.3,) * 3),
    "X": SimModelSpec("X", (250, 250, 250), 2.0, _ABC, (None, 0.3, -0.3)),
    "XI": SimModelSpec("XI", (250, 250, 250), 1.5, _ABC, (None, 0.3, -0.3)),
}


def model_spec(model_id) -> SimModelSpec:
    key = str(model_id).upper().removeprefix("MODEL-").removeprefix("MODEL")
    if key not in MODELS:
        raise InvalidParameterError(f"unknown model {model_id!r}; expected one of {list(MODELS)}")
    return MODELS[key]


def generate_model(spec: SimModelSpec | str, rng) -> Dataset:
    """Draw every cluster's rows in turn; ``ref_labels`` is the generating component."""
    if not isinstance(spec, SimModelSpec):
        spec = model_spec(spec)
    rng = rand.as_generator(rng)
    centers, covs = spec.centers(), spec.covariances()
    blocks, labels = [], []
    for w, size in enumerate(spec.sizes):
        blocks.append(rand.draw_mvnormal(centers[w], covs[w], rng, size=int(size)))
        labels.append(np.full(int(size), w))
    return Dataset(np.vstack(blocks), ref_labels=np.concatenate(labels))
