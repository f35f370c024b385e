"""Non-seasonal ARIMA(p, d, q) baseline fitted by conditional sum of squares.

Conventions: ``z`` is the d-times differenced series and

    z_t = c + sum_i ar[i] z_{t-1-i} + e_t + sum_j ma[j] e_{t-1-j}

with the intercept ``c`` present only when ``d == 0``. The first ``p``
residuals are conditioned away and pre-sample residuals are zero.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import ArimaFitError, DataError
from .gp import PredictiveDistribution
from .timeseries import TimeSeries

MAX_P, MAX_D, MAX_Q = 3, 2, 3
ROOT_TOL = 1e-6
# optima with a root this close to the unit circle are treated as failed fits
BOUNDARY_TOL = 1e-3


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        if not (0 <= self.p <= MAX_P and 0 <= self.d <= MAX_D and 0 <= self.q <= MAX_Q):
            raise DataError(f"order {self} outside the grid (p<=3, d<=2, q<=3)")

    def __str__(self):
        return f"({self.p},{self.d},{self.q})"


@dataclass(eq=False)
class ArimaModel:
    order: ArimaOrder
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    intercept: float
    innovation_variance: float
    aicc: float
    train: TimeSeries
    residuals: np.ndarray = field(repr=False)
    differenced: np.ndarray = field(repr=False)
    info: dict = field(default_factory=dict)


def difference(y, d: int) -> np.ndarray:
    return np.diff(np.asarray(y, dtype=float), n=d) if d else np.asarray(y, dtype=float)


def integrate(z, d: int, initial) -> np.ndarray:
    """Invert ``difference``; ``initial[k]`` is the first value of the k-th difference."""
    out = np.asarray(z, dtype=float)
    for k in reversed(range(d)):
        out = np.concatenate([[initial[k]], initial[k] + np.cumsum(out)])
    return out


def pacf_to_coeffs(r) -> np.ndarray:
    """Map partial autocorrelations in (-1, 1) to stationary AR coefficients."""
    phi = np.zeros(0)
    for k, rk in enumerate(r):
        phi = np.concatenate([phi - rk * phi[::-1], [rk]]) if k else np.array([rk])
    return phi


def coeffs_to_pacf(phi) -> np.ndarray:
    phi = np.array(phi, dtype=float)
    p = phi.size
    r = np.zeros(p)
    for k in range(p, 0, -1):
        rk = phi[k - 1]
        r[k - 1] = rk
        if abs(rk) >= 1:
            raise ArimaFitError("coefficients are not stationary")
        phi = (phi[: k - 1] + rk * phi[: k - 1][::-1]) / (1.0 - rk * rk)
    return r


def min_root_modulus(coeffs, sign: float) -> float:
    """Smallest root modulus of ``1 + sign * sum_i coeffs[i] z^(i+1)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0 or not np.any(coeffs):
        return math.inf
    # roots of the lag polynomial are reciprocals of the companion eigenvalues;
    # this stays accurate when trailing coefficients are negligible
    comp = np.zeros((coeffs.size, coeffs.size))
    comp[0] = -sign * coeffs
    comp[1:, :-1] = np.eye(coeffs.size - 1)
    top = float(np.max(np.abs(np.linalg.eigvals(comp))))
    return math.inf if top == 0.0 else 1.0 / top


def is_stationary(ar) -> bool:
    return min_root_modulus(ar, -1.0) > 1.0 + ROOT_TOL


def is_invertible(ma) -> bool:
    return min_root_modulus(ma, 1.0) > 1.0 + ROOT_TOL


def css_residuals(z, c, ar, ma) -> np.ndarray:
    """Conditional residuals e_p..e_{n-1} with zero pre-sample residuals."""
    z = np.asarray(z, dtype=float)
    p = len(ar)
    w = z[p:] - c
    for i in range(p):
        w = w - ar[i] * z[p - 1 - i: z.size - 1 - i]
    if len(ma) == 0:
        return w
    return lfilter([1.0], np.concatenate([[1.0], ma]), w)


def _lagmat(x, lags, start):
    return np.column_stack([x[start - k: x.size - k] for k in range(1, lags + 1)])


def _hannan_rissanen(z, p, q, with_c):
    """Two-stage regression estimate: long-AR residuals, then ARMA regression."""
    n = z.size
    e = np.zeros(n)
    start = p
    if q > 0:
        m = max(p + q, min(int(round(math.log(n) ** 2)), n // 3))
        if n - m < m + 2 + (1 if with_c else 0):
            return None
        X = _lagmat(z, m, m)
        if with_c:
            X = np.column_stack([np.ones(n - m), X])
        beta, *_ = np.linalg.lstsq(X, z[m:], rcond=None)
        e[m:] = z[m:] - X @ beta
        start = m + q
    cols = []
    if with_c:
        cols.append(np.ones(n - start))
    if p:
        cols.append(_lagmat(z, p, start))
    if q:
        cols.append(_lagmat(e, q, start))
    if n - start <= sum(c.shape[1] if c.ndim > 1 else 1 for c in cols):
        return None
    X = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(X, z[start:], rcond=None)
    k = 1 if with_c else 0
    c = beta[0] if with_c else 0.0
    return c, beta[k:k + p], beta[k + p:k + p + q]


def _shrink_to_stationary(coeffs, check):
    coeffs = np.asarray(coeffs, dtype=float)
    for _ in range(60):
        if check(coeffs):
            return coeffs
        coeffs = coeffs * 0.9
    return np.zeros_like(coeffs)


def fit_arima(train: TimeSeries, order: ArimaOrder) -> ArimaModel:
    """CSS fit with Hannan-Rissanen start and quasi-Newton refinement."""
    p, d, q = order.p, order.d, order.q
    y = train.values
    z = difference(y, d)
    n_z = z.size
    if n_z < p + q + 2:
        raise DataError(f"differenced length {n_z} too short for order {order}")
    with_c = d == 0

    if p == 0 and q == 0:
        c = float(z.mean()) if with_c else 0.0
        ar, ma = np.zeros(0), np.zeros(0)
    else:
        hr = _hannan_rissanen(z, p, q, with_c)
        c0, ar0, ma0 = hr if hr is not None else (
            float(z.mean()) if with_c else 0.0, np.zeros(p), np.zeros(q))
        ar0 = _shrink_to_stationary(ar0, is_stationary)
        ma0 = _shrink_to_stationary(ma0, is_invertible)
        x0 = np.concatenate([[c0] if with_c else [],
                             np.arctanh(np.clip(coeffs_to_pacf(ar0), -0.99, 0.99)),
                             np.arctanh(np.clip(coeffs_to_pacf(-ma0), -0.99, 0.99))])

        def decode(x):
            k = 1 if with_c else 0
            cc = x[0] if with_c else 0.0
            return cc, pacf_to_coeffs(np.tanh(x[k:k + p])), -pacf_to_coeffs(np.tanh(x[k + p:]))

        def css(x):
            e = css_residuals(z, *decode(x))
            return float(e @ e)

        res = minimize(css, x0, method="BFGS", options={"maxiter": 500, "gtol": 1e-8})
        x = res.x if res.fun <= css(x0) else x0
        c, ar, ma = decode(x)
        c = float(c)
    if min_root_modulus(ar, -1.0) <= 1.0 + BOUNDARY_TOL or min_root_modulus(ma, 1.0) <= 1.0 + BOUNDARY_TOL:
        raise ArimaFitError(f"order {order}: optimum on the stationarity/invertibility boundary")
    if not is_stationary(ar):
        raise ArimaFitError(f"order {order}: AR part not stationary at the optimum")
    if not is_invertible(ma):
        raise ArimaFitError(f"order {order}: MA part not invertible at the optimum")

    e = css_residuals(z, c, ar, ma)
    n_eff = e.size
    sigma2 = float(e @ e / n_eff)
    if not sigma2 > 0:
        raise ArimaFitError(f"order {order}: zero innovation variance")
    k = p + q + (1 if with_c else 0) + 1
    # every order is scored on the same effective length (n - MAX_D) so that
    # neither start-up conditioning nor differencing changes the data count
    n_c = y.size - MAX_D
    loglik = -0.5 * n_c * (math.log(2.0 * math.pi * sigma2) + 1.0)
    denom = n_c - k - 1
    aicc = -2.0 * loglik + 2.0 * k + (2.0 * k * (k + 1) / denom if denom > 0 else math.inf)
    return ArimaModel(order, np.asarray(ar, dtype=float), np.asarray(ma, dtype=float), c,
                      sigma2, aicc, train, e, z, {"loglik": loglik, "n_eff": n_eff})


def order_grid(n: int):
    for p, d, q in itertools.product(range(MAX_P + 1), range(MAX_D + 1), range(MAX_Q + 1)):
        if n - d >= p + q + 2:
            yield ArimaOrder(p, d, q)


def select_order(train: TimeSeries) -> ArimaOrder:
    """Minimum-AICc order over the (3, 2, 3) grid.

    Ties go to fewer coefficients, then less differencing, then smaller p.
    """
    if len(train) < 8:
        raise DataError(f"need at least 8 observations for order selection, got {len(train)}")
    best_key, best = None, None
    for order in order_grid(len(train)):
        try:
            model = fit_arima(train, order)
        except ArimaFitError:
            continue
        if not math.isfinite(model.aicc):
            continue
        key = (model.aicc, order.p + order.q, order.d, order.p)
        if best_key is None or key < best_key:
            best_key, best = key, order
    if best is None:
        raise ArimaFitError("no ARIMA order in the grid could be fitted")
    return best


def auto_arima(train: TimeSeries) -> ArimaModel:
    return fit_arima(train, select_order(train))


def psi_weights(ar, ma, d: int, n: int) -> np.ndarray:
    """MA(infinity) weights of the integrated process, psi_0 = 1."""
    phi = np.concatenate([[1.0], -np.asarray(ar, dtype=float)])
    for _ in range(d):
        phi = np.convolve(phi, [1.0, -1.0])
    theta = np.concatenate([[1.0], np.asarray(ma, dtype=float)])
    psi = np.zeros(n)
    for j in range(n):
        acc = theta[j] if j < theta.size else 0.0
        for i in range(1, min(j, phi.size - 1) + 1):
            acc -= phi[i] * psi[j - i]
        psi[j] = acc
    return psi


def forecast_arima(model: ArimaModel, horizon: int) -> PredictiveDistribution:
    """Recursive point forecasts and psi-weight 95% intervals in native units."""
    if horizon < 1:
        raise DataError("horizon must be >= 1")
    p, d, q = model.order.p, model.order.d, model.order.q
    z = list(model.differenced)
    n_z = len(z)
    e = {n_z - model.residuals.size + i: r for i, r in enumerate(model.residuals)}
    z_f = []
    for h in range(horizon):
        t = n_z + h
        acc = model.intercept
        for i in range(p):
            acc += model.ar_coeffs[i] * z[t - 1 - i]
        for j in range(q):
            acc += model.ma_coeffs[j] * e.get(t - 1 - j, 0.0)
        z.append(acc)
        z_f.append(acc)

    y = model.train.values
    levels = [difference(y, k)[-1] for k in range(d)]
    mean = []
    for zf in z_f:
        cur = zf
        for k in reversed(range(d)):
            levels[k] = levels[k] + cur
            cur = levels[k]
        mean.append(cur)

    psi = psi_weights(model.ar_coeffs, model.ma_coeffs, d, horizon)
    sd = np.sqrt(model.innovation_variance * np.cumsum(psi**2))
    t_last = model.train.timestamps[-1]
    query = t_last + model.train.spacing * np.arange(1, horizon + 1)
    return PredictiveDistribution.from_moments(query, np.asarray(mean), sd, "observation")
