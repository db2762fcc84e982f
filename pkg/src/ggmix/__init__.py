"""Mixtures of decomposable Gaussian graphical models.

Library for Bayesian inference in Gaussian graphical models with
unknown clustering structure: exact G-Wishart marginal likelihoods on
chordal graphs, collapsed Dirichlet-process / Pitman-Yor mixture
samplers, an infinite hidden Markov model with GGM emissions, and
posterior summaries including a minimum-variance portfolio backtest.
"""

from .graph import (
    DecomposableGraph,
    CliqueSequence,
    GraphError,
    is_decomposable,
    decompose,
    neighborhood,
    uniform_neighbor,
)
from .gwishart import (
    GWishartParams,
    PriorSpec,
    ClusterStats,
    NumericError,
    log_mvgamma,
    log_norm_constant,
    posterior_params,
    log_marginal_likelihood,
    log_predictive,
    sample_posterior,
)

__all__ = [
    "DecomposableGraph",
    "CliqueSequence",
    "GraphError",
    "is_decomposable",
    "decompose",
    "neighborhood",
    "uniform_neighbor",
    "GWishartParams",
    "PriorSpec",
    "ClusterStats",
    "NumericError",
    "log_mvgamma",
    "log_norm_constant",
    "posterior_params",
    "log_marginal_likelihood",
    "log_predictive",
    "sample_posterior",
]

__version__ = "0.1.0"
