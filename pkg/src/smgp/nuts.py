"""No-U-Turn Hamiltonian Monte Carlo with dual-averaging step-size adaptation.

The sampler follows the efficient slice-variable NUTS of Hoffman & Gelman
(2014, Algorithm 6) with a diagonal inverse metric estimated during warmup.
It only needs a callable returning ``(log_density, gradient)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DELTA_MAX = 1000.0


@dataclass
class HmcConfig:
    n_warmup: int = 500
    n_samples: int = 1000
    n_chains: int = 2
    target_accept: float = 0.8
    max_leapfrog: int = 1024
    seed: int = 42
    # MAP restarts used to warm-start GP chains; ignored for custom targets
    warm_start_restarts: int = 3

    def __post_init__(self):
        if min(self.n_warmup, self.n_samples, self.n_chains, self.max_leapfrog) < 1:
            raise ValueError("HMC counts must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")

    @property
    def max_depth(self) -> int:
        return max(1, int(math.floor(math.log2(self.max_leapfrog))))


@dataclass
class ChainResult:
    draws: np.ndarray          # (n_samples, D)
    log_density: np.ndarray    # (n_samples,)
    accept_stat: np.ndarray    # (n_samples,)
    divergent: np.ndarray      # (n_samples,) bool
    n_leapfrog: np.ndarray     # (n_samples,)
    step_size: float
    inv_metric: np.ndarray
    info: dict = field(default_factory=dict)


class _Target:
    def __init__(self, fn):
        self.fn = fn
        self.n_evals = 0

    def __call__(self, theta):
        self.n_evals += 1
        lp, g = self.fn(theta)
        if not np.isfinite(lp):
            return -np.inf, np.zeros_like(theta)
        return float(lp), np.asarray(g, dtype=float)


def _leapfrog(target, theta, r, grad, eps, inv_metric):
    r = r + 0.5 * eps * grad
    theta = theta + eps * inv_metric * r
    lp, grad = target(theta)
    if np.isfinite(lp):
        r = r + 0.5 * eps * grad
    return theta, r, grad, lp


def _kinetic(r, inv_metric):
    return 0.5 * float(np.sum(inv_metric * r * r))


def _no_uturn(theta_minus, theta_plus, r_minus, r_plus, inv_metric):
    d = theta_plus - theta_minus
    return (d @ (inv_metric * r_minus) >= 0) and (d @ (inv_metric * r_plus) >= 0)


def find_reasonable_step(target, theta, lp, grad, inv_metric, rng, eps=1.0):
    r = rng.standard_normal(theta.size) / np.sqrt(inv_metric)
    h0 = lp - _kinetic(r, inv_metric)

    def log_ratio(e):
        _, r1, _, lp1 = _leapfrog(target, theta, r, grad, e, inv_metric)
        h1 = lp1 - _kinetic(r1, inv_metric)
        return h1 - h0 if np.isfinite(h1) else -np.inf

    lr = log_ratio(eps)
    direction = 1.0 if lr > math.log(0.5) else -1.0
    for _ in range(100):
        if direction > 0 and not lr > math.log(0.5):
            break
        if direction < 0 and not lr < math.log(0.5):
            break
        eps = eps * 2.0**direction
        if not 1e-10 < eps < 1e10:
            break
        lr = log_ratio(eps)
    if direction > 0:
        eps = eps / 2.0
    return float(np.clip(eps, 1e-10, 1e3))


class _DualAveraging:
    def __init__(self, eps0, target_accept, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps0)
        self.delta = target_accept
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.m = 0

    def update(self, accept_stat):
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.delta - accept_stat)
        log_eps = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        eta = m ** (-self.kappa)
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final(self):
        return math.exp(self.log_eps_bar)


def _build_tree(target, theta, r, grad, log_u, v, j, eps, joint0, inv_metric, rng):
    if j == 0:
        theta1, r1, grad1, lp1 = _leapfrog(target, theta, r, grad, v * eps, inv_metric)
        joint = lp1 - _kinetic(r1, inv_metric) if np.isfinite(lp1) else -np.inf
        n1 = int(log_u <= joint)
        s1 = int(log_u < joint + DELTA_MAX)
        alpha = math.exp(min(0.0, joint - joint0)) if np.isfinite(joint) else 0.0
        return (theta1, r1, grad1, theta1, r1, grad1, theta1, grad1, lp1,
                n1, s1, alpha, 1, s1 == 0)

    (tm, rm, gm, tp, rp, gp, t1, g1, lp1, n1, s1, a1, na1, div) = _build_tree(
        target, theta, r, grad, log_u, v, j - 1, eps, joint0, inv_metric, rng)
    if s1 == 1:
        if v == -1:
            (tm, rm, gm, _, _, _, t2, g2, lp2, n2, s2, a2, na2, div2) = _build_tree(
                target, tm, rm, gm, log_u, v, j - 1, eps, joint0, inv_metric, rng)
        else:
            (_, _, _, tp, rp, gp, t2, g2, lp2, n2, s2, a2, na2, div2) = _build_tree(
                target, tp, rp, gp, log_u, v, j - 1, eps, joint0, inv_metric, rng)
        div = div or div2
        if n1 + n2 > 0 and rng.uniform() < n2 / (n1 + n2):
            t1, g1, lp1 = t2, g2, lp2
        a1 += a2
        na1 += na2
        s1 = int(s2 == 1 and _no_uturn(tm, tp, rm, rp, inv_metric))
        n1 += n2
    return tm, rm, gm, tp, rp, gp, t1, g1, lp1, n1, s1, a1, na1, div


def nuts_transition(target, theta, lp, grad, eps, inv_metric, max_depth, rng):
    """One NUTS iteration; returns (theta, lp, grad, accept_stat, n_leapfrog, divergent)."""
    r0 = rng.standard_normal(theta.size) / np.sqrt(inv_metric)
    joint0 = lp - _kinetic(r0, inv_metric)
    log_u = joint0 + math.log(rng.uniform())
    tm = tp = theta
    rm = rp = r0
    gm = gp = grad
    n, s, j = 1, 1, 0
    new_theta, new_lp, new_grad = theta, lp, grad
    alpha_sum, n_alpha, divergent = 0.0, 0, False
    while s == 1 and j < max_depth:
        v = -1 if rng.uniform() < 0.5 else 1
        if v == -1:
            (tm, rm, gm, _, _, _, t1, g1, lp1, n1, s1, a, na, div) = _build_tree(
                target, tm, rm, gm, log_u, v, j, eps, joint0, inv_metric, rng)
        else:
            (_, _, _, tp, rp, gp, t1, g1, lp1, n1, s1, a, na, div) = _build_tree(
                target, tp, rp, gp, log_u, v, j, eps, joint0, inv_metric, rng)
        divergent = divergent or div
        if s1 == 1 and rng.uniform() < min(1.0, n1 / n):
            new_theta, new_lp, new_grad = t1, lp1, g1
        alpha_sum += a
        n_alpha += na
        n += n1
        s = int(s1 == 1 and _no_uturn(tm, tp, rm, rp, inv_metric))
        j += 1
    accept = alpha_sum / max(n_alpha, 1)
    return new_theta, new_lp, new_grad, accept, n_alpha, divergent


def _warmup_windows(n_warmup):
    """Iteration indices where metric collection starts and where it is applied."""
    start = n_warmup // 2
    end = int(n_warmup * 0.9)
    return start, end


def run_chain(log_density, theta0, config: HmcConfig, rng) -> ChainResult:
    target = _Target(log_density)
    theta = np.array(theta0, dtype=float)
    lp, grad = target(theta)
    if not np.isfinite(lp):
        raise FloatingPointError("initial point has non-finite log density")
    d = theta.size
    inv_metric = np.ones(d)
    eps = find_reasonable_step(target, theta, lp, grad, inv_metric, rng)
    da = _DualAveraging(eps, config.target_accept)
    collect_start, collect_end = _warmup_windows(config.n_warmup)
    collected = []

    for it in range(config.n_warmup):
        theta, lp, grad, acc, _, _ = nuts_transition(
            target, theta, lp, grad, eps, inv_metric, config.max_depth, rng)
        eps = da.update(acc)
        if collect_start <= it < collect_end:
            collected.append(theta)
        if it == collect_end - 1 and len(collected) >= 10:
            samples = np.asarray(collected)
            n = samples.shape[0]
            var = samples.var(axis=0, ddof=1)
            inv_metric = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            eps = find_reasonable_step(target, theta, lp, grad, inv_metric, rng, eps)
            da = _DualAveraging(eps, config.target_accept)
    eps = da.final if da.m > 0 else eps

    n = config.n_samples
    draws = np.empty((n, d))
    lps = np.empty(n)
    accs = np.empty(n)
    divs = np.zeros(n, dtype=bool)
    nleaps = np.empty(n, dtype=int)
    for i in range(n):
        theta, lp, grad, acc, nl, div = nuts_transition(
            target, theta, lp, grad, eps, inv_metric, config.max_depth, rng)
        draws[i], lps[i], accs[i], divs[i], nleaps[i] = theta, lp, acc, div, nl
    return ChainResult(draws, lps, accs, divs, nleaps, eps, inv_metric,
                       {"n_evals": target.n_evals})


def _autocov(x):
    n = x.size
    x = x - x.mean()
    f = np.fft.rfft(x, n=2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n] / n
    return ac


def split_rhat(chains: np.ndarray) -> float:
    """Split-R-hat for an (n_chains, n_draws) array of one parameter."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    half = n // 2
    if half < 2:
        return float("nan")
    parts = np.concatenate([chains[:, :half], chains[:, n - half:]], axis=0)
    within = parts.var(axis=1, ddof=1).mean()
    between = half * parts.mean(axis=1).var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else float("inf")
    var_plus = (half - 1) / half * within + between / half
    return float(np.sqrt(var_plus / within))


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    if n < 4:
        return float(m * n)
    acov = np.array([_autocov(c) for c in chains])
    chain_var = acov[:, 0] * n / (n - 1.0)
    mean_var = chain_var.mean()
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(m * n)
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    prev = np.inf
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        prev = pair
        tau += 2.0 * pair
    tau = max(tau, 1.0 / math.log10(m * n))
    return float(m * n / tau)


def diagnostics(per_chain_draws: np.ndarray) -> dict:
    """ESS and split-R-hat per parameter for an (n_chains, n_draws, D) array."""
    _, _, d = per_chain_draws.shape
    return {
        "ess": np.array([effective_sample_size(per_chain_draws[:, :, k]) for k in range(d)]),
        "rhat": np.array([split_rhat(per_chain_draws[:, :, k]) for k in range(d)]),
    }
