"""Multiple-imputation engines."""
from ._base import ChainSpec, ImputationResult, Trace
from .fcs import (
    FCSImputer,
    PredictorMatrix,
    RegressionDraw,
    draw_blr,
    fcs_hetero_impute,
    fcs_homo_impute,
    fcs_norm_impute,
    load_wine_predictors,
    run_fcs_chains,
)
from .jm import JMGLImputer, JMNormImputer, jm_gl_impute, jm_norm_impute

__all__ = [
    "ChainSpec",
    "ImputationResult",
    "Trace",
    "FCSImputer",
    "PredictorMatrix",
    "RegressionDraw",
    "draw_blr",
    "fcs_hetero_impute",
    "fcs_homo_impute",
    "fcs_norm_impute",
    "load_wine_predictors",
    "run_fcs_chains",
    "JMGLImputer",
    "JMNormImputer",
    "jm_gl_impute",
    "jm_norm_impute",
]
