"""Wine data workflow: masks, FCS imputation with shipped predictor sets, choice of K."""
from __future__ import annotations

from sklearn.datasets import load_wine

from .. import rand
from ..clustering import ClustererSpec, standardize
from ..impute import load_wine_predictors
from ..mechanisms import Dataset, MechanismSpec, ampute
from ..pooling import ChooseKResult, choose_k
from .experiment import impute

__all__ = ["load_wine_dataset", "ampute_wine", "wine_choose_k"]


def load_wine_dataset() -> Dataset:
    """178 wines, 13 descriptors, three cultivars as reference labels."""
    bunch = load_wine()
    return Dataset(bunch.data, ref_labels=bunch.target, columns=list(bunch.feature_names))


def ampute_wine(data: Dataset, mechanism: MechanismSpec, rng) -> Dataset:
    """Mask the wine data.  A MAR driver acts on its standardized scale,
    since the raw descriptors range over several orders of magnitude."""
    scaled = Dataset(standardize(data.values), ref_labels=data.ref_labels, columns=data.columns)
    masked = ampute(scaled, mechanism, rng)
    return Dataset(data.values, masked.mask, data.ref_labels, list(data.columns))


def wine_choose_k(masked: Dataset, engine: str = "fcs_homo", method: str = "kmeans", *, k_max: int = 6,
                  m: int = 20, l: int | None = None, b: int = 20, predictors: str | None = "mcar",
                  rng=0) -> ChooseKResult:
    """Total instability for K = 2..k_max on one masked copy of the wine data.

    ``predictors`` selects the shipped predictor set for the FCS engines
    (``"mcar"``, ``"mar"`` or None for all other variables).
    """
    pred = load_wine_predictors(predictors) if predictors and engine.startswith("fcs") else None
    spec = ClustererSpec(method, 2)

    def run(data, K, sub):
        return impute(engine, data, K, m, sub, l=l, pred=pred)

    return choose_k(masked.without_labels(), run, spec, k_max, rand.as_generator(rng), b=b)
