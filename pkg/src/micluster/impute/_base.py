"""Containers shared by the imputation engines."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..exceptions import InvalidParameterError


@dataclass(frozen=True)
class ChainSpec:
    """Number of saved imputations, burn-in and thinning of one chain.

    ``k`` is the number of latent classes (1 for the structure-blind model).
    """

    m: int = 20
    burn_in: int = 100
    thin: int = 20
    k: int = 3

    def __post_init__(self):
        if self.m < 1 or self.burn_in < 0 or self.thin < 1 or self.k < 1:
            raise InvalidParameterError(f"invalid chain settings {self}")

    @property
    def n_iter(self) -> int:
        return self.burn_in + self.thin * self.m


@dataclass
class Trace:
    """Per-iteration parameter summaries of one chain."""

    theta: list = field(default_factory=list)
    means: list = field(default_factory=list)
    cov_trace: list = field(default_factory=list)

    def record(self, theta, means, cov_trace):
        self.theta.append(np.array(theta, dtype=float))
        self.means.append(np.array(means, dtype=float))
        self.cov_trace.append(float(cov_trace))

    def to_frame(self, chain: int = 0) -> pd.DataFrame:
        rows = []
        for it, (th, mu, tr) in enumerate(zip(self.theta, self.means, self.cov_trace), start=1):
            row = {"chain": chain, "iteration": it, "cov_trace": tr}
            for w, t in enumerate(th):
                row[f"theta_{w}"] = t
            for w, vec in enumerate(np.atleast_2d(mu)):
                for j, v in enumerate(vec):
                    row[f"mean_{w}_{j}"] = v
            rows.append(row)
        return pd.DataFrame(rows)


@dataclass
class ImputationResult:
    """``m`` completed copies of the input plus chain diagnostics."""

    completed: list[np.ndarray]
    traces: list[Trace] = field(default_factory=list)
    engine: str = ""

    @property
    def m(self) -> int:
        return len(self.completed)

    def stack(self) -> np.ndarray:
        return np.stack(self.completed)

    def diagnostics(self) -> pd.DataFrame:
        frames = [t.to_frame(c) for c, t in enumerate(self.traces)]
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
