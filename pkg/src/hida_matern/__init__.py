"""Linear-time GP inference with Hida-Matern kernels via state-space models."""

from .approx import FitProblem, fit_mixture, l2_distance
from .inference import (
    Dataset,
    SearchConfig,
    fit_hyperparameters,
    kalman_filter,
    predict,
    rts_smooth,
    sample_prior,
)
from .kernels import HidaMaternSpec, MixtureSpec, eval_kernel, eval_psd, to_exp_poly
from .oracle import exact_posterior
from .ssm import StateSpaceModel, assemble_mixture

__version__ = "0.1.0"

__all__ = [
    "HidaMaternSpec",
    "MixtureSpec",
    "eval_kernel",
    "eval_psd",
    "to_exp_poly",
    "StateSpaceModel",
    "assemble_mixture",
    "Dataset",
    "kalman_filter",
    "rts_smooth",
    "predict",
    "sample_prior",
    "SearchConfig",
    "fit_hyperparameters",
    "exact_posterior",
    "FitProblem",
    "fit_mixture",
    "l2_distance",
]
