"""Hierarchical Bayesian estimation of the choice models."""
from .density import (NonFiniteGradientError, Posterior, TaskMismatchError, log_likelihood_pointwise,
                      log_posterior_and_grad, log_prior)
from .diagnostics import ess, hdi, rhat
from .nuts import PosteriorDraws, SamplerConfig, nuts, sample
from .summary import (derived_quantities, extract_correlations, posterior_predictive,
                      prob_statement, summarize)
from .variants import VARIANTS, Layout, ModelSpec

__all__ = [
    "ModelSpec", "Layout", "VARIANTS", "Posterior", "log_prior", "log_likelihood_pointwise",
    "log_posterior_and_grad", "NonFiniteGradientError", "TaskMismatchError", "SamplerConfig",
    "PosteriorDraws", "nuts", "sample", "rhat", "ess", "hdi", "summarize", "prob_statement",
    "posterior_predictive", "extract_correlations", "derived_quantities",
]
