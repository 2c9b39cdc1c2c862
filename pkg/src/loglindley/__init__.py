"""Inference for the re-parametrized log-Lindley distribution LL(sigma, pi)
and stress-strength reliability R = P(Y < X).

The closed-form R lives in ``loglindley.reliability.reliability``; it is not
re-exported here so the submodule name stays unshadowed.
"""
from .bayes import PriorSpec, bayes_estimates, credible_interval, fit_bayes, metropolis_check, posterior, sample_posterior
from .distribution import Params, cdf, log_pdf, moment, pdf, quantile, sample
from .mle import fisher_info, fit
from .reliability import (
    ReliabilityReport,
    TwoSampleParams,
    discrepancy,
    reliability_bayes,
    reliability_ml,
)

__version__ = "0.1.0"

__all__ = [
    "Params",
    "PriorSpec",
    "TwoSampleParams",
    "ReliabilityReport",
    "pdf",
    "log_pdf",
    "cdf",
    "quantile",
    "sample",
    "moment",
    "fit",
    "fisher_info",
    "posterior",
    "bayes_estimates",
    "credible_interval",
    "sample_posterior",
    "fit_bayes",
    "metropolis_check",
    "reliability_ml",
    "reliability_bayes",
    "discrepancy",
]
