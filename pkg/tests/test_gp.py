import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_params
from oracles import central_diff, gaussian_condition, normwise_rel_err
from smgp.errors import NotPositiveDefiniteError, NumericalError
from smgp.gp import (build_model, fit_arrays, jitter_cholesky, log_marginal_likelihood, predict,
                     predict_standardized, sample_prior)
from smgp.inference import pack, unpack
from smgp.kernels import NoiseParam, SMKernelParams, cross_cov, kernel_matrix
from smgp.timeseries import TimeSeries


def _instance(rng, n_max=15, Q_max=3):
    Q = int(rng.integers(1, Q_max + 1))
    n = int(rng.integers(2, n_max + 1))
    x = np.sort(rng.uniform(0, 10, n))
    return random_params(rng, Q), NoiseParam(float(rng.uniform(0.01, 0.5))), x, rng.standard_normal(n)


def test_well_separated_needs_no_jitter():
    m = fit_arrays([0.0, 5.0], [1.0, -1.0], SMKernelParams([1.0], [0.1], [0.1]), NoiseParam(0.1))
    assert m.jitter_used == 0.0


def test_duplicate_inputs_escalate_jitter():
    p = SMKernelParams([1.0], [0.0], [0.1])
    m = fit_arrays([0.0, 1.0, 1.0, 1.0], [0.0, 1.0, 1.0, 1.0], p, NoiseParam(1e-300))
    assert m.jitter_used > 0
    # a noise of 1e-15 is a few ulps of a unit diagonal, so duplicates alone can factor;
    # a dense grid makes the matrix numerically singular at that noise level
    grid = np.linspace(0, 10, 100)
    assert fit_arrays(grid, np.zeros(100), p, NoiseParam(1e-15)).jitter_used > 0


def test_jitter_ladder_exhausted():
    A = -np.eye(3)
    A[0, 0] = 3.0
    with pytest.raises(NotPositiveDefiniteError, match="ladder"):
        jitter_cholesky(A)


def test_reconstruction_and_alpha(rng):
    for _ in range(30):
        p, noise, x, y = _instance(rng, 30, 5)
        m = fit_arrays(x, y, p, noise)
        K = kernel_matrix(p, noise, x) + m.jitter_used * np.eye(x.size)
        L = m.chol_L
        assert np.linalg.norm(L @ L.T - K) / np.linalg.norm(kernel_matrix(p, None, x)) < 1e-8
        assert np.linalg.norm(K @ m.alpha - y) / np.linalg.norm(y) < 1e-8


def test_lml_single_point_closed_form():
    p = SMKernelParams([0.7, 0.4], [0.1, 0.3], [0.2, 0.05])
    m = fit_arrays([3.0], [0.0], p, NoiseParam(0.2))
    expected = -0.5 * np.log(1.1 + 0.2) - 0.5 * np.log(2 * np.pi)
    assert log_marginal_likelihood(m, with_grad=False)[0] == pytest.approx(expected, rel=1e-14)


def test_lml_matches_dense_gaussian(rng):
    from scipy.stats import multivariate_normal
    p, noise, x, y = _instance(rng)
    m = fit_arrays(x, y, p, noise)
    ref = multivariate_normal(np.zeros(x.size), kernel_matrix(p, noise, x)).logpdf(y)
    assert log_marginal_likelihood(m)[0] == pytest.approx(ref, rel=1e-10)


def test_lml_gradient_finite_differences(rng):
    for _ in range(50):
        p, noise, x, y = _instance(rng)
        phi0 = pack(p, noise)

        def f(phi):
            pp, nn = unpack(phi)
            return log_marginal_likelihood(fit_arrays(x, y, pp, nn), with_grad=False)[0]

        g = log_marginal_likelihood(fit_arrays(x, y, p, noise))[1]
        assert normwise_rel_err(g, central_diff(f, phi0)) < 1e-5


def test_lml_permutation_invariant(rng):
    p, noise, x, y = _instance(rng)
    perm = rng.permutation(x.size)
    a = log_marginal_likelihood(fit_arrays(x, y, p, noise))[0]
    b = log_marginal_likelihood(fit_arrays(x[perm], y[perm], p, noise))[0]
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("include_noise", [False, True])
def test_predict_matches_brute_force(rng, include_noise):
    for _ in range(50):
        p, noise, x, y = _instance(rng, 20, 3)
        xq = rng.uniform(-2, 12, 6)
        m = fit_arrays(x, y, p, noise)
        mean, var = predict_standardized(m, xq, include_noise)
        allx = np.concatenate([x, xq])
        ref_mean, ref_var = gaussian_condition(kernel_matrix(p, None, allx), y, x.size,
                                               noise.sigma_eps_sq, include_noise)
        np.testing.assert_allclose(mean, ref_mean, atol=1e-8)
        np.testing.assert_allclose(var, np.maximum(ref_var, 0), atol=1e-8)


def test_interpolates_with_tiny_noise():
    train = TimeSeries(np.arange(8.0), [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])
    m = build_model(train, SMKernelParams([1.0], [0.0], [0.3]), NoiseParam(1e-12))
    pred = predict(m, train.timestamps)
    np.testing.assert_allclose(pred.mean, train.values, atol=1e-5)


def test_far_query_reverts_to_prior():
    train = TimeSeries(np.arange(6.0), [1.0, 2.0, 0.0, 3.0, 1.0, 2.0])
    p = SMKernelParams([1.3], [0.1], [0.2])
    m = build_model(train, p, NoiseParam(0.1))
    pred = predict(m, [1e4])
    prior_sd = np.sqrt(p.variance) * m.scaling.y_std
    assert pred.sd[0] == pytest.approx(prior_sd, rel=0.01)
    assert pred.mean[0] == pytest.approx(m.scaling.y_mean, abs=1e-8)


def test_interval_labels_and_ordering():
    train = TimeSeries(np.arange(6.0), [1.0, 2.0, 0.0, 3.0, 1.0, 2.0])
    m = build_model(train, SMKernelParams([1.0], [0.1], [0.2]), NoiseParam(0.1))
    lat = predict(m, [2.5, 7.0])
    obs = predict(m, [2.5, 7.0], include_noise=True)
    assert lat.interval == "latent" and obs.interval == "observation"
    assert np.all(obs.sd > lat.sd)
    for pr in (lat, obs):
        assert np.all(pr.lo95 <= pr.mean) and np.all(pr.mean <= pr.hi95)
        np.testing.assert_allclose(pr.hi95 - pr.mean, 1.96 * pr.sd)


def test_nonfinite_query():
    m = fit_arrays([0.0, 1.0], [0.0, 1.0], SMKernelParams([1.0], [0.1], [0.2]), NoiseParam(0.1))
    with pytest.raises(NumericalError):
        predict(m, [np.nan])


def test_negative_variance_clamped_or_raised(caplog):
    p = SMKernelParams([1.0], [0.0], [0.01])
    m = fit_arrays([0.0, 0.0], [0.0, 0.0], p, NoiseParam(1e-300))
    with caplog.at_level(logging.WARNING):
        try:
            _, var = predict_standardized(m, [0.0])
            assert var[0] >= 0
        except NumericalError:
            pass


def test_sample_prior_deterministic(rng):
    p, noise, x, _ = _instance(rng)
    np.testing.assert_array_equal(sample_prior(p, noise, x, 7), sample_prior(p, noise, x, 7))
    assert not np.array_equal(sample_prior(p, noise, x, 7), sample_prior(p, noise, x, 8))


def test_sample_prior_moments():
    p = SMKernelParams([1.0, 0.5], [0.1, 0.3], [0.05, 0.1])
    noise = NoiseParam(0.2)
    x = np.linspace(0, 9, 10)
    draws = np.array([sample_prior(p, noise, x, s) for s in range(5000)])
    k0 = p.variance
    assert np.all(np.abs(draws.mean(axis=0)) <= 4 * np.sqrt(k0) / np.sqrt(5000))
    K = kernel_matrix(p, noise, x)
    C = np.cov(draws, rowvar=False)
    assert np.linalg.norm(C - K) / np.linalg.norm(K) < 0.10


def test_variance_bounded_by_prior(rng):
    for _ in range(30):
        p, noise, x, y = _instance(rng)
        m = fit_arrays(x, y, p, noise)
        _, var = predict_standardized(m, rng.uniform(-5, 15, 20), include_noise=True)
        assert np.all(var <= p.variance + noise.sigma_eps_sq + 1e-8)


def test_adding_data_never_increases_variance(rng):
    for _ in range(30):
        p, noise, x, y = _instance(rng)
        xq = rng.uniform(-5, 15, 10)
        _, v_small = predict_standardized(fit_arrays(x[:-1], y[:-1], p, noise), xq)
        _, v_big = predict_standardized(fit_arrays(x, y, p, noise), xq)
        assert np.all(v_big <= v_small + 1e-8)


def test_cholesky_solves_agree_with_inverse_n50(rng):
    p = random_params(rng, 3)
    x = np.sort(rng.uniform(0, 30, 50))
    y = rng.standard_normal(50)
    noise = NoiseParam(0.3)
    m = fit_arrays(x, y, p, noise)
    xq = rng.uniform(0, 30, 8)
    mean, var = predict_standardized(m, xq)
    Ks = cross_cov(p, x, xq)
    inv = np.linalg.inv(kernel_matrix(p, noise, x))
    np.testing.assert_allclose(mean, Ks.T @ inv @ y, atol=1e-8)
    np.testing.assert_allclose(var, p.variance - np.einsum("ij,ik,kj->j", Ks, inv, Ks), atol=1e-8)


def test_evidence_prefers_generating_noise():
    p = SMKernelParams([1.0, 0.6], [0.12, 0.31], [0.03, 0.05])
    noise = NoiseParam(0.05)
    x = np.arange(30.0)
    wins = 0
    for s in range(20):
        y = sample_prior(p, NoiseParam(1e-12), x, s)
        a = log_marginal_likelihood(fit_arrays(x, y, p, noise), with_grad=False)[0]
        b = log_marginal_likelihood(fit_arrays(x, y, p, NoiseParam(5.0)), with_grad=False)[0]
        wins += b < a
    assert wins >= 18


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_predictive_sd_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p, noise, x, y = _instance(rng)
    pr = predict(build_model(TimeSeries(x, y), p, noise), rng.uniform(-20, 30, 5))
    assert np.all(pr.sd >= 0)
    assert np.all(pr.lo95 <= pr.mean) and np.all(pr.mean <= pr.hi95)
