"""Pure-numpy spectral mixture kernel loops (fallback for ``_sm_ext``)."""
import numpy as np

TWO_PI = 2.0 * np.pi


def _components(tau, w, mu, v):
    # (Q, ...) envelope-weighted and phase terms
    tau = np.asarray(tau)[None, ...]
    a = (2.0 * np.pi**2 * v**2).reshape((-1,) + (1,) * (tau.ndim - 1))
    env = w.reshape(a.shape) * np.exp(-a * tau * tau)
    arg = TWO_PI * tau * mu.reshape(a.shape)
    return env, arg, a


def sm_cov(x1, x2, w, mu, v):
    tau = x1[:, None] - x2[None, :]
    env, arg, _ = _components(tau, w, mu, v)
    return np.sum(env * np.cos(arg), axis=0)


def sm_cov_sym(x, w, mu, v):
    K = sm_cov(x, x, w, mu, v)
    K = np.triu(K, 1)
    K = K + K.T
    K[np.diag_indices_from(K)] = np.sum(w)
    return K


def sm_grad_contract(x, W, w, mu, v):
    """0.5 * sum_ij W_ij dK_ij/dtheta for theta = (log w, mu, log v)."""
    tau = x[:, None] - x[None, :]
    env, arg, a = _components(tau, w, mu, v)
    c = np.cos(arg)
    Ws = 0.5 * (W + W.T)
    d_logw = env * c
    d_mu = -env * np.sin(arg) * TWO_PI * tau
    d_logv = -2.0 * env * c * a * tau * tau
    g = np.concatenate([
        0.5 * np.einsum("ij,qij->q", Ws, d_logw),
        0.5 * np.einsum("ij,qij->q", Ws, d_mu),
        0.5 * np.einsum("ij,qij->q", Ws, d_logv),
    ])
    return g
