"""Time-varying covariance estimation for high-dimensional time series.

The covariance process of a few latent factors is a weighted harmonic
average of basis covariance matrices tied together by an improper prior,
fitted by EM/ECM with closed-form updates.  Robust (Student's-t),
spatiotemporal (Kronecker) and time-varying-noise variants share the same
machinery, alongside model selection, identification, baselines and a
simulation harness.
"""

__version__ = "0.1.0"

from .basis import BasisSet, lambda_at, log_prior_basis
from .densities import log_density, marginal_covariance
from .em_gaussian import (
    EStepStats,
    FitConfig,
    FitReport,
    e_step,
    fit,
    log_joint_posterior,
    m_step,
)
from .em_robust import e_step_robust, fit_robust, m_step_robust
from .em_st import STParams, e_step_st, ecm_step_st, fit_st
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateWeightsError,
    InvalidParamsError,
    NumericError,
    TvcovError,
)
from .forecast import ForecastResult, forecast_roll
from .identify import (
    IdentifyConfig,
    cosine_similarity,
    identify,
    orthonormalize,
    similarity_matrix,
    sparsify,
    time_varying_loadings,
)
from .baselines import EwmaModel, ewma_fit, ewma_select, nadaraya_watson_cov, nonfactor_map
from .params import FactorParams, Regularization, RobustExtras
from .selection import (
    SelectionResult,
    SplitPlan,
    bandwidth_objective,
    select_K,
    select_bandwidth,
    validation_score,
)
from .simulate import SimulationSpec, average_kl, kl_gaussian, simulate
from .weights import WeightScheme, eval_weights

__all__ = [
    "BasisSet", "ConfigError", "DataError", "DegenerateWeightsError",
    "EStepStats", "EwmaModel", "FactorParams", "FitConfig", "FitReport",
    "ForecastResult", "IdentifyConfig", "InvalidParamsError", "NumericError",
    "Regularization", "RobustExtras", "STParams", "SelectionResult",
    "SimulationSpec", "SplitPlan", "TvcovError", "WeightScheme",
    "average_kl", "bandwidth_objective", "cosine_similarity", "e_step",
    "e_step_robust", "e_step_st", "ecm_step_st", "eval_weights", "ewma_fit",
    "ewma_select", "fit", "fit_robust", "fit_st", "forecast_roll", "identify",
    "kl_gaussian", "lambda_at", "log_density", "log_joint_posterior",
    "log_prior_basis", "m_step", "m_step_robust", "marginal_covariance",
    "nadaraya_watson_cov", "nonfactor_map", "orthonormalize", "select_K",
    "select_bandwidth", "similarity_matrix", "simulate", "sparsify",
    "time_varying_loadings", "validation_score",
]
