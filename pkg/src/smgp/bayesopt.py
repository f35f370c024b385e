"""Expected-improvement Bayesian optimization of SM-kernel frequencies and scales.

The tuned coordinates are ``(mu_1..Q, log v_1..Q)``; weights and noise are
profiled out at each candidate by a short inner MAP fit.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

from .errors import DataError, NotPositiveDefiniteError, TuningError
from .gp import GPModel, jitter_cholesky
from .inference import Posterior, pack
from .kernels import NoiseParam, SMKernelParams, rbf_kernel
from .timeseries import TimeSeries, fmt_real

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass
class TuneConfig:
    budget: int = 30
    n_init: int = 8
    seed: int = 42
    n_candidates: int = 2048
    n_polish: int = 3
    inner_steps: int = 100

    def __post_init__(self):
        if not self.budget >= self.n_init >= 2:
            raise DataError("need budget >= n_init >= 2")


@dataclass
class TuneIteration:
    point: np.ndarray
    objective: float
    best_so_far: float


@dataclass
class TuneTrace:
    iterations: list[TuneIteration]
    dim_names: list[str]
    best_params: SMKernelParams | None = None
    best_noise: NoiseParam | None = None
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iterations)

    @property
    def best_index(self) -> int:
        objs = np.array([it.objective for it in self.iterations])
        return int(np.argmax(np.where(np.isfinite(objs), objs, -np.inf)))

    @property
    def best_objective(self) -> float:
        return self.iterations[-1].best_so_far

    @property
    def best_point(self) -> np.ndarray:
        return self.iterations[self.best_index].point


def expected_improvement(mean, sd, best):
    """EI for maximization; reduces to ``max(mean - best, 0)`` where ``sd == 0``."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if np.any(sd < 0):
        raise ValueError("sd must be nonnegative")
    diff = mean - best
    pos = sd > 0
    safe_sd = np.where(pos, sd, 1.0)
    with np.errstate(over="ignore"):
        # subnormal sd overflows z to +-inf, whose limits are already right
        z = diff / safe_sd
        ei = diff * ndtr(z) + safe_sd * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    out = np.where(pos, np.maximum(ei, 0.0), np.maximum(diff, 0.0))
    return float(out) if out.ndim == 0 else out


class _Surrogate:
    """Exact GP with an isotropic RBF kernel on unit-box inputs."""

    # log lengthscale, log variance, log noise
    _prior_mean = np.array([math.log(0.3), 0.0, math.log(1e-3)])
    _prior_sd = np.array([1.0, 1.0, 2.0])
    _bounds = [(math.log(1e-2), math.log(10.0)), (math.log(1e-2), math.log(1e2)),
               (math.log(1e-8), math.log(1.0))]

    def __init__(self, U, z, start=None):
        self.U = U
        self.z = z
        self.D2 = np.sum((U[:, None, :] - U[None, :, :]) ** 2, axis=-1)
        starts = [self._prior_mean] if start is None else [start, self._prior_mean]
        best = None
        for s in starts:
            res = minimize(self._neg_obj, s, jac=True, method="L-BFGS-B",
                           bounds=self._bounds, options={"maxiter": 200})
            if best is None or res.fun < best.fun:
                best = res
        self.hyp = best.x
        self._condition()

    def _K(self, hyp):
        ell, var, noise = np.exp(hyp)
        K = rbf_kernel(ell, var, np.sqrt(self.D2))
        return K, ell, var, noise

    def _neg_obj(self, hyp):
        K, ell, var, noise = self._K(hyp)
        n = K.shape[0]
        try:
            L, _ = jitter_cholesky(K + noise * np.eye(n))
        except NotPositiveDefiniteError:
            return 1e300, np.zeros(3)
        a = cho_solve((L, True), self.z)
        ll = -0.5 * self.z @ a - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
        Wm = np.outer(a, a) - cho_solve((L, True), np.eye(n))
        g = 0.5 * np.array([np.sum(Wm * K * self.D2 / ell**2), np.sum(Wm * K),
                            noise * np.trace(Wm)])
        d = (hyp - self._prior_mean) / self._prior_sd
        lp = -0.5 * np.sum(d * d)
        glp = -d / self._prior_sd
        return -(ll + lp), -(g + glp)

    def _condition(self):
        K, self.ell, self.var, self.noise = self._K(self.hyp)
        self.L, _ = jitter_cholesky(K + self.noise * np.eye(K.shape[0]))
        self.alpha = cho_solve((self.L, True), self.z)

    def predict(self, V):
        V = np.atleast_2d(V)
        d = np.sqrt(np.sum((V[:, None, :] - self.U[None, :, :]) ** 2, axis=-1))
        Ks = rbf_kernel(self.ell, self.var, d)
        mean = Ks @ self.alpha
        A = np.linalg.solve(self.L, Ks.T)
        var = np.maximum(self.var - np.sum(A * A, axis=0), 0.0)
        return mean, np.sqrt(var)


def _initial_design(d, n, seed):
    sob = qmc.Sobol(d=d, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return sob.random(n)


def bayes_optimize(objective, lower, upper, config: TuneConfig | None = None,
                   dim_names=None) -> TuneTrace:
    """Maximize ``objective`` over the box ``[lower, upper]`` within ``config.budget`` calls."""
    config = config or TuneConfig()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper)) and np.all(lower < upper)):
        raise DataError("search box must be finite with lower < upper")
    d = lower.size
    dim_names = list(dim_names) if dim_names is not None else [f"x_{k + 1}" for k in range(d)]
    rng = np.random.default_rng([config.seed, 7])
    span = upper - lower

    U = list(_initial_design(d, config.n_init, config.seed))
    vals: list[float] = []
    iterations: list[TuneIteration] = []
    best = -np.inf
    hyp = None

    def record(u):
        nonlocal best
        x = lower + span * u
        try:
            f = float(objective(x))
        except (NotPositiveDefiniteError, FloatingPointError):
            f = -np.inf
        if not np.isfinite(f):
            f = -np.inf
        vals.append(f)
        best = max(best, f)
        iterations.append(TuneIteration(x, f, best))

    for u in U:
        record(u)
    while len(iterations) < config.budget:
        y = np.array(vals)
        finite = np.isfinite(y)
        if not finite.any():
            u = rng.uniform(size=d)
        else:
            y = np.where(finite, y, y[finite].min())
            sd = y.std()
            z = (y - y.mean()) / (sd if sd > 0 else 1.0)
            sur = _Surrogate(np.asarray(U), z, hyp)
            hyp = sur.hyp
            u = _maximize_ei(sur, z.max(), np.asarray(U), rng, config)
        U.append(u)
        record(u)

    if not np.isfinite(best):
        raise TuningError("every candidate failed to evaluate")
    return TuneTrace(iterations, dim_names)


def _maximize_ei(sur: _Surrogate, best, U_seen, rng, config: TuneConfig):
    d = U_seen.shape[1]
    cand = rng.uniform(size=(config.n_candidates, d))
    m, s = sur.predict(cand)
    ei = expected_improvement(m, s, best)
    order = np.argsort(-ei, kind="stable")

    def neg_ei(u):
        mm, ss = sur.predict(u[None, :])
        return -float(expected_improvement(mm[0], ss[0], best))

    best_u, best_val = cand[order[0]], ei[order[0]]
    for k in order[: config.n_polish]:
        res = minimize(neg_ei, cand[k], method="L-BFGS-B", bounds=[(0.0, 1.0)] * d,
                       options={"maxiter": 50})
        if -res.fun > best_val:
            best_u, best_val = np.clip(res.x, 0.0, 1.0), -res.fun
    # never re-evaluate an existing point
    if np.min(np.max(np.abs(U_seen - best_u), axis=1)) < 1e-9:
        for k in order:
            if np.min(np.max(np.abs(U_seen - cand[k]), axis=1)) >= 1e-9:
                return cand[k]
    return best_u


def search_box(post: Posterior) -> tuple[np.ndarray, np.ndarray]:
    Q = post.Q
    x_range = float(post.x.max() - post.x.min())
    lo = np.concatenate([np.zeros(Q), np.full(Q, math.log(0.1 / x_range))])
    hi = np.concatenate([np.full(Q, post.f_nyq), np.full(Q, math.log(10.0 * post.f_nyq))])
    return lo, hi


def _profile(post: Posterior, cand, max_iter: int, start=None):
    """Fit log weights and log noise with frequencies/scales frozen at ``cand``."""
    Q = post.Q
    mu, log_v = cand[:Q], cand[Q:]
    var_y = float(np.var(post.y, ddof=1))
    free0 = (np.concatenate([np.full(Q, math.log(var_y / Q)), [math.log(0.1 * var_y)]])
             if start is None else start)
    free_idx = np.r_[0:Q, 3 * Q]

    def full(free):
        phi = np.empty(3 * Q + 1)
        phi[:Q], phi[Q:2 * Q], phi[2 * Q:3 * Q], phi[3 * Q] = free[:Q], mu, log_v, free[Q]
        return phi

    def fun(free):
        val, g = post.log_posterior_natural(full(free))
        if not np.isfinite(val):
            return 1e300, np.zeros_like(free)
        return -val, -g[free_idx]

    obj0 = -fun(free0)[0]
    res = minimize(fun, free0, jac=True, method="L-BFGS-B",
                   bounds=[(-18.0, 8.0)] * (Q + 1), options={"maxiter": max_iter})
    free, obj = res.x, -float(res.fun)
    if not obj >= obj0:
        free, obj = free0, obj0
    if obj <= -1e299:
        return free, -np.inf
    return free, obj


def tune(train: TimeSeries, Q: int, config: TuneConfig | None = None) -> tuple[GPModel, TuneTrace]:
    """Bayesian-optimization fit of the spectral mixture GP."""
    config = config or TuneConfig()
    if len(train) < 4:
        raise DataError("need at least 4 observations to tune")
    post = Posterior(train, Q)
    lo, hi = search_box(post)
    names = [f"mu_{q + 1}" for q in range(Q)] + [f"log_v_{q + 1}" for q in range(Q)]
    trace = bayes_optimize(lambda c: _profile(post, c, config.inner_steps)[1],
                           lo, hi, config, names)
    cand = trace.best_point
    free, _ = _profile(post, cand, config.inner_steps)
    free, obj = _profile(post, cand, 500, start=free)
    phi = np.concatenate([free[:Q], cand[:Q], cand[Q:], free[Q:]])
    model = post.model(phi)
    model.info.update({"method": "bo", "objective": obj, "Q": Q,
                       "best_candidate_objective": trace.best_objective})
    trace.best_params, trace.best_noise = model.params, model.noise
    trace.info["refit_objective"] = obj
    return model, trace


def export_trace(trace: TuneTrace) -> list[dict]:
    """Rows of ``iter, objective, best_so_far`` plus one column per tuned dimension."""
    if not trace.iterations:
        raise DataError("empty trace")
    rows = []
    for i, it in enumerate(trace.iterations, start=1):
        row = {"iter": i, "objective": it.objective, "best_so_far": it.best_so_far}
        row.update(zip(trace.dim_names, it.point.tolist()))
        rows.append(row)
    return rows


def write_trace_csv(trace: TuneTrace, path) -> None:
    rows = export_trace(trace)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([row["iter"]] + [fmt_real(v) for k, v in row.items() if k != "iter"])
