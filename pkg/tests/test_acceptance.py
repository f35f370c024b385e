"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line with its measured runtime; the lines are
printed at the end of the pytest run (see ``conftest.py``) and when this file
is executed directly with ``python tests/test_acceptance.py``.
"""
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import DATA, random_params
from oracles import (central_diff, gaussian_condition, kernel_from_density, normwise_rel_err)
from smgp import modelio
from smgp.arima import ArimaOrder, fit_arima, forecast_arima
from smgp.bayesopt import TuneConfig, bayes_optimize
from smgp.cli import main as cli_main
from smgp.evaluation import compare_models, mape, rmse
from smgp.gp import fit_arrays, log_marginal_likelihood, predict, sample_prior
from smgp.inference import (Posterior, hmc_sample, init_hyperparams, map_estimate,
                            neg_log_posterior, pack, predictive_from_chain, unpack)
from smgp.kernels import (NoiseParam, SMKernelParams, kernel_matrix, rbf_kernel, sm_kernel,
                          sm_kernel_grad, spectral_density)
from smgp.nuts import HmcConfig
from smgp.timeseries import TimeSeries

RESULTS = {}

# synthetic series for the GP-SM vs ARIMA comparison: two incommensurate
# frequencies (ratio is the golden ratio) plus observation noise
CMP_FREQ = 0.05
CMP_SCALE = 0.01
CMP_NOISE = 0.05
CMP_OFFSET = 10.0


@contextmanager
def criterion(num, title, limit_s):
    rec = {"title": title, "limit": limit_s, "detail": "", "ok": False}
    RESULTS[num] = rec
    t0 = time.perf_counter()
    try:
        yield rec
    finally:
        rec["elapsed"] = time.perf_counter() - t0
        rec["ok"] = rec["ok"] and rec["elapsed"] < limit_s
    assert rec["ok"], f"criterion {num} failed: {rec['detail']} ({rec['elapsed']:.1f}s, limit {limit_s}s)"


def summary_lines():
    lines = []
    for num in sorted(RESULTS):
        r = RESULTS[num]
        status = "PASS" if r["ok"] else "FAIL"
        lines.append(f"criterion {num:>2} {status}  {r['title']}: {r['detail']} "
                     f"[{r.get('elapsed', float('nan')):.1f}s / {r['limit']}s]")
    return lines


def test_c01_kernel_psd():
    rng = np.random.default_rng(1)
    with criterion(1, "kernel PSD suite", 60) as rec:
        worst = np.inf
        for _ in range(200):
            p = random_params(rng, int(rng.integers(1, 11)))
            n = int(rng.integers(2, 201))
            x = rng.uniform(0, 100, n)
            K = kernel_matrix(p, None, x)
            worst = min(worst, np.linalg.eigvalsh(K).min() / (np.trace(K) / n))
        rec["ok"] = worst >= -1e-8
        rec["detail"] = f"worst min-eigenvalue / (trace/N) = {worst:.2e} over 200 draws"


def test_c02_gradients():
    rng = np.random.default_rng(2)
    with criterion(2, "gradient suite", 60) as rec:
        e_k = e_l = e_p = 0.0
        for _ in range(60):
            Q = int(rng.integers(1, 4))
            p = random_params(rng, Q)
            tau = float(rng.uniform(-5, 5))
            g = sm_kernel_grad(p, tau)
            a = np.concatenate([g["log_weights"], g["frequencies"], g["log_scales"]])
            z0 = np.concatenate([np.log(p.weights), p.frequencies, np.log(p.scales)])
            fd = central_diff(lambda z: sm_kernel(SMKernelParams(np.exp(z[:Q]), z[Q:2 * Q],
                                                                 np.exp(z[2 * Q:])), tau), z0)
            e_k = max(e_k, normwise_rel_err(a, fd))
        for _ in range(60):
            Q = int(rng.integers(1, 4))
            n = int(rng.integers(2, 16))
            p, noise = random_params(rng, Q), NoiseParam(float(rng.uniform(0.01, 0.5)))
            x, y = np.sort(rng.uniform(0, 10, n)), rng.standard_normal(n)
            g = log_marginal_likelihood(fit_arrays(x, y, p, noise))[1]
            fd = central_diff(lambda phi: log_marginal_likelihood(
                fit_arrays(x, y, *unpack(phi)), with_grad=False)[0], pack(p, noise))
            e_l = max(e_l, normwise_rel_err(g, fd))
        for i in range(60):
            Q = int(rng.integers(1, 3))
            n = int(rng.integers(4, 13))
            x = np.arange(float(n))
            train = TimeSeries(x, np.sin(0.8 * x) + 0.3 * rng.standard_normal(n))
            post = Posterior(train, Q)
            theta = post.to_unconstrained(pack(*init_hyperparams(train, Q, i)))
            theta = theta + 0.3 * rng.standard_normal(theta.size)
            g = neg_log_posterior(theta, train)[1]
            fd = central_diff(lambda t: neg_log_posterior(t, train)[0], theta)
            e_p = max(e_p, normwise_rel_err(g, fd))
        rec["ok"] = e_k < 1e-6 and e_l < 1e-5 and e_p < 1e-5
        rec["detail"] = (f"max rel err kernel {e_k:.1e} (<1e-6), evidence {e_l:.1e} (<1e-5), "
                         f"posterior {e_p:.1e} (<1e-5), 60 instances each")


def test_c03_conditioning():
    rng = np.random.default_rng(3)
    with criterion(3, "conditioning oracle", 10) as rec:
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(2, 21))
            p = random_params(rng, int(rng.integers(1, 4)))
            noise = NoiseParam(float(rng.uniform(0.01, 0.5)))
            x, y = np.sort(rng.uniform(0, 10, n)), rng.standard_normal(n)
            xq = rng.uniform(-2, 12, 5)
            pred = predict(fit_arrays(x, y, p, noise), xq)
            m, v = gaussian_condition(kernel_matrix(p, None, np.concatenate([x, xq])), y, n,
                                      noise.sigma_eps_sq)
            worst = max(worst, np.max(np.abs(pred.mean - m)),
                        np.max(np.abs(pred.sd ** 2 - np.maximum(v, 0))))
        rec["ok"] = worst < 1e-8
        rec["detail"] = f"max |difference| in mean/variance = {worst:.1e} over 50 instances"


def test_c04_rbf_reduction():
    with criterion(4, "RBF reduction", 1) as rec:
        v = 0.07
        tau = np.linspace(-40, 40, 1000)
        diff = np.max(np.abs(sm_kernel(SMKernelParams([1.3], [0.0], [v]), tau)
                             - rbf_kernel(1 / (2 * np.pi * v), 1.3, tau)))
        rec["ok"] = diff <= 1e-12
        rec["detail"] = f"max |difference| = {diff:.1e} on 1000 lags"


def test_c05_bochner():
    rng = np.random.default_rng(5)
    with criterion(5, "Bochner consistency", 10) as rec:
        worst = 0.0
        for Q in (1, 2, 3):
            for _ in range(3):
                p = random_params(rng, Q)
                hi = float(np.max(p.frequencies + 12 * p.scales))
                for tau in (0.0, 0.4, 1.3, 3.0, 7.5):
                    k = kernel_from_density(lambda s: spectral_density(p, s), tau, (-hi, hi))
                    worst = max(worst, abs(k - sm_kernel(p, tau)))
        rec["ok"] = worst < 1e-5
        rec["detail"] = f"max |quadrature - kernel| = {worst:.1e} for Q = 1..3"


@pytest.mark.slow
def test_c06_generate_and_recover():
    truth = SMKernelParams([1.0], [0.2], [0.05])
    noise = NoiseParam(0.01)
    with criterion(6, "generate-and-recover", 600) as rec:
        hits, covered, total = 0, 0, 0
        for s in range(10):
            x_all = np.arange(45.0)
            y_all = sample_prior(truth, noise, x_all, 600 + s)
            held = np.sort(np.random.default_rng(700 + s).choice(45, 5, replace=False))
            keep = np.setdiff1d(np.arange(45), held)
            train = TimeSeries(x_all[keep], y_all[keep])
            m = map_estimate(train, 1, restarts=10, seed=s)
            hits += abs(m.params.frequencies[0] - 0.2) <= 0.02
            chain = hmc_sample(train, 1, HmcConfig(seed=s))
            pred = predictive_from_chain(chain, train, x_all[held], include_noise=True)
            covered += int(np.sum((pred.lo95 <= y_all[held]) & (y_all[held] <= pred.hi95)))
            total += held.size
        rec["ok"] = hits >= 8 and covered / total >= 0.9
        rec["detail"] = (f"MAP frequency within 0.02 in {hits}/10 (need 8); HMC 95% coverage "
                         f"{covered}/{total} = {covered / total:.2f} (need 0.90)")


def comparison_series(s):
    g = (1 + 5 ** 0.5) / 2
    p = SMKernelParams([1.0, 1.0], [CMP_FREQ, CMP_FREQ * g], [CMP_SCALE, CMP_SCALE])
    x = np.arange(15.0)
    return x, sample_prior(p, NoiseParam(CMP_NOISE), x, 1000 + s) + CMP_OFFSET


@pytest.mark.slow
def test_c07_gp_beats_arima():
    with criterion(7, "GP-SM (HMC) vs ARIMA", 900) as rec:
        wins = 0
        for s in range(20):
            x, y = comparison_series(s)
            train = TimeSeries(x[:11], y[:11])
            gp, _ = modelio.fit(train, "hmc", Q=10, seed=s)
            ar, _ = modelio.fit(train, "arima", seed=s)
            wins += rmse(y[11:], gp.predict(x[11:]).mean) < rmse(y[11:], ar.predict(x[11:]).mean)
        rec["ok"] = wins >= 14
        rec["detail"] = f"GP-SM lower test RMSE in {wins}/20 series (need 14)"


def test_c08_hmc_standard_normal():
    with criterion(8, "HMC on a standard normal", 60) as rec:
        chain = hmc_sample(None, 0, HmcConfig(seed=8),
                           log_density=lambda t: (-0.5 * t @ t, -t), init=np.zeros(2))
        ess, rhat = chain.diagnostics["ess"], chain.diagnostics["rhat"]
        means = chain.draws.mean(axis=0)
        rec["ok"] = bool(np.all(np.abs(means) < 3 / np.sqrt(ess)) and np.all(rhat < 1.05))
        rec["detail"] = (f"means {np.round(means, 3).tolist()} vs bound "
                         f"{np.round(3 / np.sqrt(ess), 3).tolist()}; R-hat max {rhat.max():.3f}")


def test_c09_bayes_opt():
    with criterion(9, "Bayesian optimization", 300) as rec:
        hits, lengths = 0, set()
        for s in range(10):
            trace = bayes_optimize(lambda x: -np.sum((x - 0.3) ** 2), [0, 0], [1, 1],
                                   TuneConfig(budget=30, seed=s))
            lengths.add(len(trace))
            hits += trace.best_objective >= -0.01
        rec["ok"] = lengths == {30} and hits >= 9
        rec["detail"] = f"trace lengths {sorted(lengths)}; within 0.01 of optimum in {hits}/10 (need 9)"


def test_c10_arima_oracles():
    from scipy.signal import lfilter
    with criterion(10, "ARIMA oracle suite", 120) as rec:
        rng = np.random.default_rng(10)
        y = lfilter([1.0], [1.0, -0.6], rng.standard_normal(260) + 1.5)[200:]
        m = fit_arima(TimeSeries(np.arange(60.0), y), ArimaOrder(1, 0, 0))
        phi, c, s2 = m.ar_coeffs[0], m.intercept, m.innovation_variance
        f = forecast_arima(m, 10)
        h = np.arange(1, 11)
        mean_cf = c * (1 - phi ** h) / (1 - phi) + phi ** h * y[-1]
        var_cf = s2 * (1 - phi ** (2 * h)) / (1 - phi ** 2)
        err = max(np.max(np.abs(f.mean - mean_cf)), np.max(np.abs(f.sd ** 2 - var_cf)))
        rw = np.cumsum(rng.standard_normal(30))
        fr = forecast_arima(fit_arima(TimeSeries(np.arange(30.0), rw), ArimaOrder(0, 1, 0)), 5)
        rw_ok = bool(np.all(fr.mean == rw[-1]))
        hits = 0
        for s in range(10):
            # same generator and seeds as the unit-level recovery test
            e = np.random.default_rng(s).standard_normal(400)
            z = lfilter([1.0], [1.0, -0.7], e)[200:]
            hits += abs(fit_arima(TimeSeries(np.arange(200.0), z), ArimaOrder(1, 0, 0)).ar_coeffs[0]
                        - 0.7) <= 0.1
        rec["ok"] = err < 1e-8 and rw_ok and hits >= 9
        rec["detail"] = (f"AR(1) closed-form error {err:.1e}; random walk flat {rw_ok}; "
                         f"phi within 0.1 in {hits}/10 (need 9)")


def test_c11_metrics():
    with criterion(11, "metric oracles", 10) as rec:
        from smgp.evaluation import MetricsReport
        e1 = abs(rmse([1, 2], [2, 4]) - np.sqrt(2.5))
        e2 = abs(mape([4, 5], [5, 4]) - 22.5)
        rows = compare_models([MetricsReport("GP-SM", 1.25, 27.96, 1.0, 3),
                               MetricsReport("GP-SM Optimized", 1.29, 28.0, 1.0, 3),
                               MetricsReport("ARIMA", 3.20, 60.0, 1.0, 3)])
        flags = [r.best_rmse for r in rows]
        rec["ok"] = e1 <= 1e-12 and e2 <= 1e-12 and flags == [True, False, False]
        rec["detail"] = f"rmse err {e1:.1e}; mape err {e2:.1e}; best-RMSE flags {flags}"


@pytest.mark.slow
def test_c12_compare_determinism(tmp_path):
    with criterion(12, "compare determinism", 600) as rec:
        dirs = [tmp_path / "a", tmp_path / "b"]
        codes = [cli_main(["compare", "--data", str(DATA / "email_like.csv"), "--n-train", "11",
                           "--out", str(d)]) for d in dirs]
        names = sorted(p.name for p in dirs[0].iterdir())
        same = names == sorted(p.name for p in dirs[1].iterdir()) and all(
            (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names)
        rec["ok"] = codes == [0, 0] and same
        rec["detail"] = f"exit codes {codes}; {len(names)} files byte-identical: {same}"


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
