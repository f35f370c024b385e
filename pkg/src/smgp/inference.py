"""Hyperparameter estimation for the spectral mixture GP.

Two coordinate systems are used for the 3Q+1 hyperparameters:

* natural: ``(log w, mu, log v, log noise_var)``, with ``mu`` box-bounded to
  ``[0, f_nyq]``; used by the MAP optimizer;
* unconstrained: the same but ``mu = f_nyq * sigmoid(u)``; used by HMC.

Priors live on the log-scale quantities and on ``mu`` directly (uniform), so
only the ``mu`` transform contributes a log-Jacobian.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from . import nuts
from .errors import DataError, EstimationError, NotPositiveDefiniteError, SamplingError
from .gp import GPModel, PredictiveDistribution, fit_arrays, log_marginal_likelihood, predict_standardized
from .kernels import NoiseParam, SMKernelParams
from .nuts import HmcConfig
from .timeseries import ScalingParams, TimeSeries, fmt_real, standardize

log = logging.getLogger(__name__)

PRIOR_SD = 1.0
MAX_PREDICTIVE_DRAWS = 200
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
# box for the log-scale coordinates during MAP; keeps the kernel finite
_LOG_BOUNDS = (-18.0, 8.0)


@dataclass(frozen=True)
class HyperPrior:
    Q: int
    f_nyq: float
    log_w_mean: float
    log_v_mean: float
    log_noise_mean: float
    sd: float = PRIOR_SD

    @classmethod
    def for_data(cls, x, y, Q: int) -> "HyperPrior":
        """Weakly informative, data-scaled prior for standardized ``x``, ``y``."""
        x = np.asarray(x, dtype=float)
        var_y = float(np.var(y, ddof=1))
        x_range = float(x.max() - x.min())
        f_nyq = 1.0 / (2.0 * float(np.median(np.diff(x))))
        return cls(Q, f_nyq, np.log(var_y / Q), np.log(2.0 / x_range), np.log(0.1 * var_y))

    def _normal(self, z, mean):
        d = (z - mean) / self.sd
        return -0.5 * d * d - np.log(self.sd) - _LOG_SQRT_2PI, -d / self.sd

    def log_density(self, phi):
        """Log prior at natural coordinates and its gradient."""
        Q = self.Q
        log_w, mu, log_v, log_s2 = phi[:Q], phi[Q:2 * Q], phi[2 * Q:3 * Q], phi[3 * Q]
        grad = np.zeros_like(phi)
        if np.any(mu < 0) or np.any(mu > self.f_nyq):
            return -np.inf, grad
        lw, grad[:Q] = self._normal(log_w, self.log_w_mean)
        lv, grad[2 * Q:3 * Q] = self._normal(log_v, self.log_v_mean)
        ln, grad[3 * Q] = self._normal(log_s2, self.log_noise_mean)
        value = lw.sum() + lv.sum() + ln - Q * np.log(self.f_nyq)
        return float(value), grad


def pack(params: SMKernelParams, noise: NoiseParam) -> np.ndarray:
    """Natural coordinate vector for (params, noise)."""
    return np.concatenate([np.log(params.weights), params.frequencies,
                           np.log(params.scales), [np.log(noise.sigma_eps_sq)]])


def unpack(phi) -> tuple[SMKernelParams, NoiseParam]:
    Q = (len(phi) - 1) // 3
    return (SMKernelParams(np.exp(phi[:Q]), phi[Q:2 * Q], np.exp(phi[2 * Q:3 * Q])),
            NoiseParam(float(np.exp(phi[3 * Q]))))


def param_names(Q: int) -> list[str]:
    return ([f"w_{q + 1}" for q in range(Q)] + [f"mu_{q + 1}" for q in range(Q)]
            + [f"v_{q + 1}" for q in range(Q)] + ["noise_var"])


class Posterior:
    """Hyperparameter posterior for one training series (standardized internally)."""

    def __init__(self, train: TimeSeries, Q: int):
        if Q < 1:
            raise DataError("Q must be >= 1")
        std, self.scaling = standardize(train)
        self.x = np.ascontiguousarray(std.timestamps)
        self.y = np.ascontiguousarray(std.values)
        self.Q = Q
        self.prior = HyperPrior.for_data(self.x, self.y, Q)

    @property
    def f_nyq(self) -> float:
        return self.prior.f_nyq

    def model(self, phi) -> GPModel:
        params, noise = unpack(phi)
        return fit_arrays(self.x, self.y, params, noise, self.scaling)

    def log_posterior_natural(self, phi):
        """Log evidence + log prior at natural coordinates, with gradient."""
        phi = np.asarray(phi, dtype=float)
        lp, g_prior = self.prior.log_density(phi)
        if not np.isfinite(lp):
            return -np.inf, np.zeros_like(phi)
        try:
            model = self.model(phi)
        except (NotPositiveDefiniteError, ValueError, FloatingPointError):
            return -np.inf, np.zeros_like(phi)
        ll, g_ll = log_marginal_likelihood(model)
        if not np.isfinite(ll):
            return -np.inf, np.zeros_like(phi)
        return ll + lp, g_ll + g_prior

    # unconstrained <-> natural
    def to_natural(self, theta):
        theta = np.asarray(theta, dtype=float)
        Q = self.Q
        phi = theta.copy()
        phi[Q:2 * Q] = self.f_nyq * expit(theta[Q:2 * Q])
        return phi

    def to_unconstrained(self, phi):
        phi = np.asarray(phi, dtype=float)
        Q = self.Q
        theta = phi.copy()
        p = np.clip(phi[Q:2 * Q] / self.f_nyq, 1e-9, 1.0 - 1e-9)
        theta[Q:2 * Q] = np.log(p) - np.log1p(-p)
        return theta

    def log_posterior(self, theta):
        """Log posterior density in unconstrained coordinates, with gradient."""
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            return -np.inf, np.zeros_like(theta)
        Q = self.Q
        u = theta[Q:2 * Q]
        s = expit(u)
        phi = self.to_natural(theta)
        # guard the closed support edges reached by sigmoid saturation
        phi[Q:2 * Q] = np.clip(phi[Q:2 * Q], 0.0, self.f_nyq)
        val, g = self.log_posterior_natural(phi)
        if not np.isfinite(val):
            return -np.inf, np.zeros_like(theta)
        dmu_du = self.f_nyq * s * (1.0 - s)
        log_jac = np.sum(np.log(self.f_nyq) - np.logaddexp(0.0, -u) - np.logaddexp(0.0, u))
        g = g.copy()
        g[Q:2 * Q] = g[Q:2 * Q] * dmu_du + (1.0 - 2.0 * s)
        return val + log_jac, g

    def neg_log_posterior(self, theta):
        val, g = self.log_posterior(theta)
        if not np.isfinite(val):
            return np.inf, np.zeros_like(np.asarray(theta, dtype=float))
        return -val, -g


def neg_log_posterior(theta, train: TimeSeries):
    """Negative log hyperparameter posterior (unconstrained coordinates) and gradient."""
    theta = np.asarray(theta, dtype=float)
    if (theta.size - 1) % 3:
        raise DataError("theta must have length 3Q + 1")
    return Posterior(train, (theta.size - 1) // 3).neg_log_posterior(theta)


def _init_from(x, y, Q: int, seed: int) -> tuple[SMKernelParams, NoiseParam]:
    rng = np.random.default_rng(seed)
    var_y = float(np.var(y, ddof=1))
    x_range = float(x.max() - x.min())
    f_nyq = 1.0 / (2.0 * float(np.median(np.diff(x))))
    mu = rng.uniform(0.0, f_nyq, size=Q)
    v = np.maximum(np.abs(rng.normal(0.0, 2.0 / x_range, size=Q)), 1e-6)
    return SMKernelParams(np.full(Q, var_y / Q), mu, v), NoiseParam(0.1 * var_y)


def init_hyperparams(train: TimeSeries, Q: int, seed: int) -> tuple[SMKernelParams, NoiseParam]:
    """Seeded starting point in standardized units (frequencies below Nyquist)."""
    if len(train) < 4:
        raise DataError("need at least 4 observations to initialize hyperparameters")
    std, _ = standardize(train)
    return _init_from(std.timestamps, std.values, Q, seed)


def _optimize(post: Posterior, phi0, max_iter: int):
    Q = post.Q
    bounds = [_LOG_BOUNDS] * Q + [(0.0, post.f_nyq)] * Q + [_LOG_BOUNDS] * (Q + 1)

    def fun(phi):
        val, g = post.log_posterior_natural(phi)
        if not np.isfinite(val):
            return 1e300, np.zeros_like(phi)
        return -val, -g

    res = minimize(fun, phi0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": max_iter, "gtol": 1e-6})
    return np.asarray(res.x), -float(res.fun)


def map_estimate(train: TimeSeries, Q: int, restarts: int = 10, seed: int = 42,
                 max_iter: int = 500) -> GPModel:
    """Best penalized-evidence fit over ``restarts`` seeded initializations.

    Restart ``r`` starts from ``init_hyperparams(train, Q, seed + r)``. The
    returned model carries ``info`` with the objective of every restart.
    """
    if restarts < 1:
        raise DataError("restarts must be >= 1")
    if len(train) < 4:
        raise DataError("need at least 4 observations for MAP estimation")
    post = Posterior(train, Q)
    return _map_on(post, restarts, seed, max_iter)


def _map_on(post: Posterior, restarts: int, seed: int, max_iter: int = 500) -> GPModel:
    best_phi, best_obj = None, -np.inf
    objectives = []
    for r in range(restarts):
        params0, noise0 = _init_from(post.x, post.y, post.Q, seed + r)
        phi0 = pack(params0, noise0)
        obj0, _ = post.log_posterior_natural(phi0)
        if not np.isfinite(obj0):
            objectives.append(-np.inf)
            continue
        phi, obj = _optimize(post, phi0, max_iter)
        if not obj >= obj0:
            phi, obj = phi0, obj0
        objectives.append(obj)
        if obj > best_obj:
            best_phi, best_obj = phi, obj
    if best_phi is None:
        raise EstimationError(f"all {restarts} MAP restarts failed to factorize")
    model = post.model(best_phi)
    model.info.update({"method": "map", "objective": best_obj,
                       "restart_objectives": objectives, "Q": post.Q})
    return model


@dataclass
class HmcChain:
    draws: np.ndarray                # (n_chains * n_samples, D), unconstrained
    chain_index: np.ndarray          # chain id of each draw
    log_posterior: np.ndarray
    accept_rate: float
    diagnostics: dict
    step_sizes: list
    n_divergent: int
    warnings: list = field(default_factory=list)
    Q: int | None = None
    f_nyq: float | None = None

    def __len__(self):
        return self.draws.shape[0]

    def natural_draws(self) -> np.ndarray:
        """Draws as (log w, mu, log v, log noise_var)."""
        Q = self.Q
        phi = self.draws.copy()
        phi[:, Q:2 * Q] = self.f_nyq * expit(self.draws[:, Q:2 * Q])
        return phi

    def constrained_draws(self) -> np.ndarray:
        """Draws as (w, mu, v, noise_var)."""
        Q = self.Q
        phi = self.natural_draws()
        phi[:, :Q] = np.exp(phi[:, :Q])
        phi[:, 2 * Q:] = np.exp(phi[:, 2 * Q:])
        return phi


def _sample(log_density, inits, config: HmcConfig) -> HmcChain:
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    results = []
    for c in range(config.n_chains):
        rng = np.random.default_rng(seeds[c])
        results.append(nuts.run_chain(log_density, inits[c], config, rng))
    per_chain = np.stack([r.draws for r in results])
    draws = per_chain.reshape(-1, per_chain.shape[-1])
    divergent = np.concatenate([r.divergent for r in results])
    chain = HmcChain(
        draws=draws,
        chain_index=np.repeat(np.arange(config.n_chains), config.n_samples),
        log_posterior=np.concatenate([r.log_density for r in results]),
        accept_rate=float(np.clip(np.mean([r.accept_stat.mean() for r in results]), 0.0, 1.0)),
        diagnostics=nuts.diagnostics(per_chain),
        step_sizes=[r.step_size for r in results],
        n_divergent=int(divergent.sum()),
    )
    if divergent.all():
        raise SamplingError("every post-warmup transition diverged")
    frac = divergent.mean()
    if frac > 0.2:
        msg = f"{100 * frac:.1f}% of post-warmup transitions diverged"
        log.warning(msg)
        chain.warnings.append(msg)
    return chain


def hmc_sample(train: TimeSeries | None, Q: int, config: HmcConfig | None = None, *,
               log_density=None, init=None) -> HmcChain:
    """NUTS draws from the hyperparameter posterior.

    Chains start near a short multi-restart MAP fit. Passing ``log_density``
    (a callable returning ``(logp, grad)``) and ``init`` samples that target
    instead; ``train`` and ``Q`` are then ignored.
    """
    config = config or HmcConfig()
    init_rng = np.random.default_rng([config.seed, 1])
    if log_density is not None:
        init = np.asarray(init, dtype=float)
        inits = [init + 0.1 * init_rng.standard_normal(init.size) for _ in range(config.n_chains)]
        return _sample(log_density, inits, config)

    post = Posterior(train, Q)
    start = _map_on(post, max(1, config.warm_start_restarts), config.seed)
    theta0 = post.to_unconstrained(pack(start.params, start.noise))
    inits = []
    for _ in range(config.n_chains):
        for _attempt in range(20):
            cand = theta0 + 0.1 * init_rng.standard_normal(theta0.size)
            if np.isfinite(post.log_posterior(cand)[0]):
                break
        else:
            cand = theta0
        inits.append(cand)
    chain = _sample(post.log_posterior, inits, config)
    chain.Q, chain.f_nyq = Q, post.f_nyq
    return chain


def _thin_index(n: int, limit: int = MAX_PREDICTIVE_DRAWS) -> np.ndarray:
    return np.unique(np.linspace(0, n - 1, min(n, limit)).round().astype(int))


def predictive_from_draws(phis, train: TimeSeries, query_x,
                          include_noise: bool = False) -> PredictiveDistribution:
    """Gaussian moment-matched mixture of per-draw predictives (native units)."""
    std, scaling = standardize(train)
    query_x = np.asarray(query_x, dtype=float).reshape(-1)
    xq = scaling.x_to_std(query_x)
    means, variances = [], []
    for phi in phis:
        params, noise = unpack(np.asarray(phi, dtype=float))
        model = fit_arrays(std.timestamps, std.values, params, noise, scaling)
        m, v = predict_standardized(model, xq, include_noise)
        means.append(m)
        variances.append(v)
    means = np.asarray(means)
    mean = means.mean(axis=0)
    var = np.asarray(variances).mean(axis=0) + means.var(axis=0)
    return PredictiveDistribution.from_moments(
        query_x, scaling.y_from_std(mean), np.sqrt(var) * scaling.y_std,
        "observation" if include_noise else "latent")


def thinned_natural_draws(chain: HmcChain) -> np.ndarray:
    return chain.natural_draws()[_thin_index(len(chain))]


def predictive_from_chain(chain: HmcChain, train: TimeSeries, query_x,
                          include_noise: bool = False) -> PredictiveDistribution:
    """Posterior-averaged predictive over at most 200 evenly spaced draws."""
    if len(chain) == 0:
        raise SamplingError("empty chain")
    return predictive_from_draws(thinned_natural_draws(chain), train, query_x, include_noise)


def export_chain_csv(chain: HmcChain, path) -> None:
    """One row per draw, constrained parameters in standardized units."""
    Q = chain.Q
    header = ["chain", "draw", "log_posterior"] + param_names(Q)
    vals = chain.constrained_draws()
    draw_idx = np.concatenate([np.arange(np.sum(chain.chain_index == c))
                               for c in np.unique(chain.chain_index)])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(chain)):
            w.writerow([int(chain.chain_index[i]), int(draw_idx[i]),
                        fmt_real(chain.log_posterior[i])] + [fmt_real(v) for v in vals[i]])


__all__ = [
    "HmcChain", "HmcConfig", "HyperPrior", "Posterior", "ScalingParams",
    "export_chain_csv", "hmc_sample", "init_hyperparams", "map_estimate",
    "neg_log_posterior", "pack", "param_names", "predictive_from_chain",
    "predictive_from_draws", "unpack",
]
