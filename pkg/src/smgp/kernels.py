"""Spectral mixture kernel, its spectral density, and the RBF special case.

The kernel on a one-dimensional input difference ``tau`` is::

    k(tau) = sum_q w_q * exp(-2 pi^2 tau^2 v_q^2) * cos(2 pi tau mu_q)

with weights ``w_q > 0``, frequencies ``mu_q >= 0`` (cycles per unit time)
and spectral scales ``v_q > 0``. Its spectral density is the symmetrized
Gaussian mixture ``S(s) = sum_q w_q * (N(s; mu_q, v_q^2) + N(-s; mu_q, v_q^2)) / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DataError

TWO_PI = 2.0 * np.pi


def _vec(a) -> np.ndarray:
    arr = np.ascontiguousarray(np.array(a, dtype=float).reshape(-1))
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SMKernelParams:
    weights: np.ndarray
    frequencies: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        w, mu, v = _vec(self.weights), _vec(self.frequencies), _vec(self.scales)
        if w.size < 1 or not (w.size == mu.size == v.size):
            raise DataError("weights, frequencies and scales must share a length Q >= 1")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(v))):
            raise DataError("kernel parameters must be finite")
        if np.any(w <= 0) or np.any(v <= 0) or np.any(mu < 0):
            raise DataError("need weights > 0, scales > 0 and frequencies >= 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "frequencies", mu)
        object.__setattr__(self, "scales", v)

    @property
    def Q(self) -> int:
        return self.weights.size

    @property
    def variance(self) -> float:
        """k(0), the prior signal variance."""
        return float(np.sum(self.weights))

    @property
    def lengthscales(self) -> np.ndarray:
        return 1.0 / self.scales

    def __eq__(self, other):
        if not isinstance(other, SMKernelParams):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights)
                and np.array_equal(self.frequencies, other.frequencies)
                and np.array_equal(self.scales, other.scales))

    __hash__ = None

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(),
                "frequencies": self.frequencies.tolist(),
                "scales": self.scales.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SMKernelParams":
        return cls(d["weights"], d["frequencies"], d["scales"])


@dataclass(frozen=True)
class NoiseParam:
    sigma_eps_sq: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma_eps_sq) and self.sigma_eps_sq > 0):
            raise DataError("noise variance must be a positive finite number")
        object.__setattr__(self, "sigma_eps_sq", float(self.sigma_eps_sq))


def sm_kernel(params: SMKernelParams, tau):
    """Evaluate the spectral mixture kernel at lag(s) ``tau``."""
    tau = np.asarray(tau, dtype=float)
    t2 = tau[..., None] ** 2
    env = params.weights * np.exp(-2.0 * np.pi**2 * t2 * params.scales**2)
    # cos is even, so feeding |tau| keeps k(tau) == k(-tau) bit for bit
    out = np.sum(env * np.cos(TWO_PI * np.abs(tau)[..., None] * params.frequencies), axis=-1)
    return float(out) if out.ndim == 0 else out


def sm_kernel_grad(params: SMKernelParams, tau: float) -> dict:
    """Derivatives of k(tau) w.r.t. log weights, frequencies and log scales."""
    tau = float(tau)
    w, mu, v = params.weights, params.frequencies, params.scales
    a = 2.0 * np.pi**2 * v**2
    env = w * np.exp(-a * tau * tau)
    arg = TWO_PI * tau * mu
    c = np.cos(arg)
    return {
        "log_weights": env * c,
        "frequencies": -env * np.sin(arg) * TWO_PI * tau,
        "log_scales": -2.0 * a * tau * tau * env * c,
    }


def spectral_density(params: SMKernelParams, s):
    """Symmetrized Gaussian-mixture spectral density ``S(s)``."""
    s = np.asarray(s, dtype=float)[..., None]
    mu, v = params.frequencies, params.scales
    norm = 1.0 / (v * np.sqrt(2.0 * np.pi))
    pos = np.exp(-0.5 * ((s - mu) / v) ** 2)
    neg = np.exp(-0.5 * ((-s - mu) / v) ** 2)
    out = np.sum(params.weights * norm * 0.5 * (pos + neg), axis=-1)
    return float(out) if out.ndim == 0 else out


def cross_cov(params: SMKernelParams, x1, x2) -> np.ndarray:
    """Noise-free cross covariance between two input sets."""
    return _backend.sm_cov(_vec(x1), _vec(x2), params.weights, params.frequencies, params.scales)


def kernel_matrix(params: SMKernelParams, noise: NoiseParam | None, xs) -> np.ndarray:
    """``K[i, j] = k(xs[i] - xs[j]) + noise * [i == j]``, exactly symmetric."""
    K = _backend.sm_cov_sym(_vec(xs), params.weights, params.frequencies, params.scales)
    if noise is not None:
        K[np.diag_indices_from(K)] += noise.sigma_eps_sq
    return K


def kernel_grad_contract(params: SMKernelParams, xs, W) -> np.ndarray:
    """``0.5 * sum_ij W_ij dK_ij/dtheta`` stacked as (log w, mu, log v)."""
    return _backend.sm_grad_contract(_vec(xs), np.ascontiguousarray(W, dtype=float),
                                     params.weights, params.frequencies, params.scales)


def rbf_kernel(lengthscale: float, variance: float, tau):
    if lengthscale <= 0 or variance <= 0:
        raise DataError("rbf lengthscale and variance must be positive")
    tau = np.asarray(tau, dtype=float)
    out = variance * np.exp(-(tau**2) / (2.0 * lengthscale**2))
    return float(out) if out.ndim == 0 else out


def rbf_equivalent(params: SMKernelParams) -> tuple[float, float]:
    """(lengthscale, variance) of the RBF matching a single zero-frequency component."""
    if params.Q != 1 or params.frequencies[0] != 0:
        raise DataError("only a Q=1, mu=0 mixture reduces to an RBF kernel")
    return 1.0 / (TWO_PI * params.scales[0]), float(params.weights[0])
