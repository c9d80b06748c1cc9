"""Bayesian structure learning of Gaussian dynamic Bayesian networks from
incomplete time series, with exact Gibbs imputation of missing values."""

__version__ = "0.1.0"

from .model import (DbnStructure, LaggedDataset, McmcConfig, Priors, RegressionParams,
                    TimeSeriesDataset, design_matrix, lag_dataset)
from .sampler import PosteriorTrace, run_chains, run_lume_dbn

__all__ = [
    "DbnStructure", "LaggedDataset", "McmcConfig", "Priors", "RegressionParams",
    "TimeSeriesDataset", "design_matrix", "lag_dataset", "PosteriorTrace", "run_chains",
    "run_lume_dbn",
]
