"""Functional Gaussian-process regression for spatially indexed outcomes.

Models S functional realizations observed over shared 2-D locations as the
sum of spatially-varying effects of fixed functional predictors and a
basis-expanded, spatially-indexed effect of per-realization global
predictors, with Gaussian-process priors on every coefficient surface.
Inference marginalizes the surfaces and samples the covariance parameters
by adaptive random-walk Metropolis-Hastings; prediction conditions jointly
on the training stack.
"""

from ._backend import BACKEND_NAME
from .basis import SplineSpec, TensorBasis, basis_matrix, build_basis, eval_basis_vector
from .errors import (
    ConfigError,
    FgpError,
    InitializationError,
    InvalidInputError,
    NumericalError,
)
from .gwr import GwrConfig, gwr_fit_predict
from .inference import McmcConfig, PosteriorDraws, initialize_state, mh_step, run_chain, run_chains
from .kernels import KernelParams, LocationSet, cov_matrix, cross_cov_matrix, matern_cov
from .model import (
    Dataset,
    ModelSpec,
    ObsPoint,
    ParamState,
    assemble_c_beta,
    assemble_sigma_y,
    assemble_sigma_z,
    default_decay_support,
    log_marginal_likelihood,
    log_prior,
    prior_cov_pair,
)
from .prediction import (
    PredictionResult,
    TestSet,
    evaluate_metrics,
    latent_surfaces,
    posterior_predictive,
    predictive_moments,
)
from .simulation import ScenarioSpec, generate_misspecified, generate_scenario, sample_gp_surface

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "ConfigError",
    "Dataset",
    "FgpError",
    "GwrConfig",
    "InitializationError",
    "InvalidInputError",
    "KernelParams",
    "LocationSet",
    "McmcConfig",
    "ModelSpec",
    "NumericalError",
    "ObsPoint",
    "ParamState",
    "PosteriorDraws",
    "PredictionResult",
    "ScenarioSpec",
    "SplineSpec",
    "TensorBasis",
    "TestSet",
    "assemble_c_beta",
    "assemble_sigma_y",
    "assemble_sigma_z",
    "basis_matrix",
    "build_basis",
    "cov_matrix",
    "cross_cov_matrix",
    "default_decay_support",
    "eval_basis_vector",
    "evaluate_metrics",
    "generate_misspecified",
    "generate_scenario",
    "gwr_fit_predict",
    "initialize_state",
    "latent_surfaces",
    "log_marginal_likelihood",
    "log_prior",
    "matern_cov",
    "mh_step",
    "posterior_predictive",
    "predictive_moments",
    "prior_cov_pair",
    "run_chain",
    "run_chains",
    "sample_gp_surface",
    "__version__",
]
