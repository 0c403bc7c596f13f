"""Multiple imputation for clustering incomplete continuous data."""
from .clustering import ClustererSpec, KMeansClusterer, PAMClusterer, WardClusterer, fit_clusterer
from .gmm import GaussianMixtureClassifier, MixtureParams, Partition, em_fit, em_fit_incomplete
from .impute import (
    ChainSpec,
    FCSImputer,
    ImputationResult,
    JMGLImputer,
    JMNormImputer,
    PredictorMatrix,
    fcs_hetero_impute,
    fcs_homo_impute,
    fcs_norm_impute,
    jm_gl_impute,
    jm_norm_impute,
)
from .mechanisms import Dataset, MechanismSpec, ampute
from .pooling import ConsensusResult, ari, choose_k, consensus, mirkin, pool, total_instability

__version__ = "0.1.0"

__all__ = [
    "ClustererSpec",
    "KMeansClusterer",
    "PAMClusterer",
    "WardClusterer",
    "fit_clusterer",
    "GaussianMixtureClassifier",
    "MixtureParams",
    "Partition",
    "em_fit",
    "em_fit_incomplete",
    "ChainSpec",
    "FCSImputer",
    "ImputationResult",
    "JMGLImputer",
    "JMNormImputer",
    "PredictorMatrix",
    "fcs_hetero_impute",
    "fcs_homo_impute",
    "fcs_norm_impute",
    "jm_gl_impute",
    "jm_norm_impute",
    "Dataset",
    "MechanismSpec",
    "ampute",
    "ConsensusResult",
    "ari",
    "choose_k",
    "consensus",
    "mirkin",
    "pool",
    "total_instability",
]
