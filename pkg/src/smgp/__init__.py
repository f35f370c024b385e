"""Spectral mixture Gaussian-process forecasting for short, noisy time series."""
from ._backend import BACKEND
from .arima import ArimaModel, ArimaOrder, fit_arima, forecast_arima, select_order
from .bayesopt import TuneConfig, TuneTrace, expected_improvement, tune
from .errors import SmgpError
from .evaluation import MetricsReport, compare_models, interval_coverage, mape, rmse
from .gp import GPModel, PredictiveDistribution, build_model, log_marginal_likelihood, predict, sample_prior
from .inference import HmcChain, hmc_sample, init_hyperparams, map_estimate, predictive_from_chain
from .kernels import NoiseParam, SMKernelParams, kernel_matrix, rbf_kernel, sm_kernel, spectral_density
from .nuts import HmcConfig
from .timeseries import ScalingParams, SplitSeries, TimeSeries, load_csv, split, standardize

__version__ = "0.1.0"
