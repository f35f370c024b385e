"""Exact Gaussian-process regression with a spectral mixture kernel.

All model state lives in standardized units (see ``timeseries.standardize``);
``predict`` maps results back to native units. The mean function is zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NotPositiveDefiniteError, NumericalError
from .kernels import NoiseParam, SMKernelParams, cross_cov, kernel_grad_contract, kernel_matrix
from .timeseries import ScalingParams, TimeSeries, standardize

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
Z95 = 1.96
LOG_2PI = np.log(2.0 * np.pi)


def jitter_cholesky(A: np.ndarray, ladder=JITTER_LADDER) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A + jitter * I`` for the first jitter that works.

    Jitter levels are multiples of the mean diagonal of ``A``.
    """
    scale = float(np.mean(np.diag(A)))
    for rel in ladder:
        jit = rel * scale
        try:
            if jit == 0.0:
                return np.linalg.cholesky(A), 0.0
            return np.linalg.cholesky(A + jit * np.eye(A.shape[0])), jit
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefiniteError(
        f"matrix not positive definite after jitter ladder {list(ladder)} x mean diagonal {scale:.3g}")


@dataclass(frozen=True, eq=False)
class GPModel:
    train_x: np.ndarray
    train_y: np.ndarray
    params: SMKernelParams
    noise: NoiseParam
    scaling: ScalingParams
    chol_L: np.ndarray
    alpha: np.ndarray
    jitter_used: float
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.train_x.size

    def train_series(self) -> TimeSeries:
        """Training data in native units."""
        return TimeSeries(self.scaling.x_from_std(self.train_x),
                          self.scaling.y_from_std(self.train_y))


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    query_x: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    interval: str = "latent"

    @classmethod
    def from_moments(cls, query_x, mean, sd, interval="latent"):
        mean = np.asarray(mean, dtype=float)
        sd = np.asarray(sd, dtype=float)
        return cls(np.asarray(query_x, dtype=float), mean, sd,
                   mean - Z95 * sd, mean + Z95 * sd, interval)

    def __len__(self):
        return self.mean.size


def fit_arrays(x, y, params: SMKernelParams, noise: NoiseParam,
               scaling: ScalingParams | None = None) -> GPModel:
    """Condition on standardized arrays directly."""
    x = np.ascontiguousarray(x, dtype=float).reshape(-1)
    y = np.ascontiguousarray(y, dtype=float).reshape(-1)
    K = kernel_matrix(params, noise, x)
    L, jit = jitter_cholesky(K)
    alpha = cho_solve((L, True), y)
    for a in (x, y, L, alpha):
        a.flags.writeable = False
    return GPModel(x, y, params, noise, scaling or ScalingParams(), L, alpha, jit)


def build_model(train: TimeSeries, params: SMKernelParams, noise: NoiseParam) -> GPModel:
    """Standardize ``train`` and factorize its covariance; params are in standardized units."""
    std, scaling = standardize(train)
    return fit_arrays(std.timestamps, std.values, params, noise, scaling)


def log_marginal_likelihood(model: GPModel, with_grad: bool = True):
    """Log evidence of the standardized training targets.

    The gradient is ordered (log w_1..Q, mu_1..Q, log v_1..Q, log noise_var).
    """
    L, alpha, y = model.chol_L, model.alpha, model.train_y
    value = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * model.n * LOG_2PI
    if not with_grad:
        return float(value), None
    Kinv = cho_solve((L, True), np.eye(model.n))
    W = np.outer(alpha, alpha) - Kinv
    g_kern = kernel_grad_contract(model.params, model.train_x, W)
    g_noise = 0.5 * model.noise.sigma_eps_sq * np.trace(W)
    return float(value), np.append(g_kern, g_noise)


def predict_standardized(model: GPModel, xq, include_noise: bool = False):
    """Predictive mean and variance at standardized inputs, in standardized units."""
    xq = np.ascontiguousarray(xq, dtype=float).reshape(-1)
    Ks = cross_cov(model.params, model.train_x, xq)
    mean = Ks.T @ model.alpha
    V = solve_triangular(model.chol_L, Ks, lower=True)
    k0 = model.params.variance
    var = k0 - np.sum(V * V, axis=0)
    floor = -1e-10 * k0
    if np.any(var < floor):
        raise NumericalError(f"predictive variance {var.min():.3g} is below tolerance {floor:.3g}")
    if np.any(var < 0):
        log.warning("clamping %d slightly negative predictive variances", int(np.sum(var < 0)))
        var = np.maximum(var, 0.0)
    if include_noise:
        var = var + model.noise.sigma_eps_sq
    return mean, var


def predict(model: GPModel, query_x, include_noise: bool = False) -> PredictiveDistribution:
    """Posterior predictive at native-unit inputs, returned in native units.

    With ``include_noise`` the observation noise is added to the latent variance.
    """
    query_x = np.asarray(query_x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(query_x)):
        raise NumericalError("query inputs must be finite")
    mean, var = predict_standardized(model, model.scaling.x_to_std(query_x), include_noise)
    sc = model.scaling
    return PredictiveDistribution.from_moments(
        query_x, sc.y_from_std(mean), np.sqrt(var) * sc.y_std,
        "observation" if include_noise else "latent")


def sample_prior(params: SMKernelParams, noise: NoiseParam, xs, seed: int) -> np.ndarray:
    """One draw of ``f(xs) + eps`` from the GP prior."""
    xs = np.asarray(xs, dtype=float).reshape(-1)
    L, _ = jitter_cholesky(kernel_matrix(params, None, xs))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(xs.size)
    eps = rng.standard_normal(xs.size) * np.sqrt(noise.sigma_eps_sq)
    return L @ z + eps
