"""Missing-data masks under MCAR and MAR mechanisms.

MAR masks use a probit link on one fully observed driver column,
``P(missing) = Phi(a + x_driver)``, with the intercept ``a`` calibrated so
the expected missing fraction equals ``tau``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from . import rand
from .exceptions import CalibrationError, InvalidParameterError

__all__ = ["Dataset", "MechanismSpec", "calibrate_intercept", "ampute"]


@dataclass
class Dataset:
    """Values with a parallel observation mask (True = observed).

    Missing cells of ``values`` hold NaN.  ``ref_labels`` is only ever used
    to score partitions.
    """

    values: np.ndarray
    mask: np.ndarray | None = None
    ref_labels: np.ndarray | None = None
    columns: list[str] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidParameterError("values must be 2-D")
        if self.mask is None:
            mask = ~np.isnan(values)
        else:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != values.shape:
                raise InvalidParameterError("mask and values have different shapes")
        values[~mask] = np.nan
        self.values = values
        self.mask = mask
        if self.ref_labels is not None:
            self.ref_labels = np.asarray(self.ref_labels, dtype=np.int64)
            if self.ref_labels.shape != (values.shape[0],):
                raise InvalidParameterError("ref_labels must have one entry per row")
        if self.columns is None:
            self.columns = [f"V{j + 1}" for j in range(values.shape[1])]
        elif len(self.columns) != values.shape[1]:
            raise InvalidParameterError("column names do not match the number of columns")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(self.mask.all())

    def missing_fraction(self) -> float:
        return float(1.0 - self.mask.mean())

    def without_labels(self) -> "Dataset":
        return replace(self, ref_labels=None)


PRESET_DRIVERS = {"mar1": 0, "mar2": 7}


@dataclass(frozen=True)
class MechanismSpec:
    """``kind`` is ``"mcar"`` or ``"mar"``; ``driver_col`` is 0-based.

    ``MechanismSpec.named("mar2", 0.4)`` gives the MAR mechanism driven by
    the eighth variable.
    """

    kind: str
    tau: float
    driver_col: int | None = None
    intercept: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("mcar", "mar"):
            raise InvalidParameterError(f"unknown mechanism {self.kind!r}")
        if not 0.0 < self.tau < 1.0:
            raise InvalidParameterError(f"tau must lie in (0, 1), got {self.tau}")
        if self.kind == "mar" and self.driver_col is None:
            raise InvalidParameterError("a MAR mechanism needs a driver column")

    @classmethod
    def named(cls, name: str, tau: float, driver_col: int | None = None) -> "MechanismSpec":
        name = name.lower().replace(" ", "").replace("_", "")
        if name == "mcar":
            return cls("mcar", tau)
        if name in PRESET_DRIVERS:
            return cls("mar", tau, PRESET_DRIVERS[name])
        if name == "mar":
            return cls("mar", tau, 0 if driver_col is None else driver_col)
        raise InvalidParameterError(f"unknown mechanism {name!r}")

    @property
    def label(self) -> str:
        if self.kind == "mcar":
            return "mcar"
        for name, col in PRESET_DRIVERS.items():
            if col == self.driver_col:
                return name
        return f"mar{self.driver_col}"


def calibrate_intercept(tau: float, driver_values, lo: float = -12.0, hi: float = 12.0) -> float:
    """Intercept ``a`` such that ``mean(Phi(a + x)) == tau`` (bisection)."""
    if not 0.0 < tau < 1.0:
        raise InvalidParameterError(f"tau must lie in (0, 1), got {tau}")
    x = np.asarray(driver_values, dtype=float).ravel()
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise InvalidParameterError("driver values must be a non-empty finite vector")

    def excess(a):
        return float(ndtr(a + x).mean()) - tau

    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo > 0 or f_hi < 0:
        raise CalibrationError(f"tau={tau} cannot be reached with a in [{lo}, {hi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    a = 0.5 * (lo + hi)
    if abs(excess(a)) > 1e-4:
        raise CalibrationError(f"calibration for tau={tau} stalled at {excess(a) + tau:.6f}")
    return a


def ampute(data: Dataset, spec: MechanismSpec, rng) -> Dataset:
    """Mask cells of a complete dataset.

    The MAR driver column stays fully observed.  A row that loses every cell
    gets one uniformly chosen cell back.
    """
    if not data.is_complete:
        raise InvalidParameterError("ampute expects a complete dataset")
    rng = rand.as_generator(rng)
    n, p = data.values.shape
    u = rng.random((n, p))
    if spec.kind == "mcar":
        missing = u < spec.tau
        eligible = np.ones(p, dtype=bool)
    else:
        d = spec.driver_col
        if d is None or not 0 <= d < p:
            raise InvalidParameterError(f"driver column {d} outside [0, {p})")
        x = data.values[:, d]
        a = calibrate_intercept(spec.tau, x)
        missing = u < ndtr(a + x)[:, None]
        missing[:, d] = False
        eligible = np.arange(p) != d
    empty = np.flatnonzero(missing.all(axis=1))
    if empty.size:
        cols = np.flatnonzero(eligible)
        keep = cols[rng.integers(cols.size, size=empty.size)]
        missing[empty, keep] = False
    return Dataset(data.values, ~missing, data.ref_labels, list(data.columns))


def masked_fraction(data: Dataset, spec: MechanismSpec) -> float:
    """Missing fraction over the cells the mechanism may mask."""
    mask = data.mask
    if spec.kind == "mar":
        mask = np.delete(mask, spec.driver_col, axis=1)
    return float(1.0 - mask.mean())
