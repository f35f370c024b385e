# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled spectral mixture kernel loops.

Mirrors ``smgp._sm_py`` function for function; the two are checked against
each other in the test suite.
"""
import numpy as np

from libc.math cimport cos, sin, exp, M_PI


def sm_cov(const double[::1] x1, const double[::1] x2,
           const double[::1] w, const double[::1] mu, const double[::1] v):
    cdef Py_ssize_t n1 = x1.shape[0], n2 = x2.shape[0], nq = w.shape[0]
    cdef Py_ssize_t i, j, q
    cdef double tau, acc, two_pi = 2.0 * M_PI
    cdef double[::1] a = np.empty(nq)
    out = np.empty((n1, n2))
    cdef double[:, ::1] K = out
    for q in range(nq):
        a[q] = 2.0 * M_PI * M_PI * v[q] * v[q]
    for i in range(n1):
        for j in range(n2):
            tau = x1[i] - x2[j]
            acc = 0.0
            for q in range(nq):
                acc += w[q] * exp(-a[q] * tau * tau) * cos(two_pi * tau * mu[q])
            K[i, j] = acc
    return out


def sm_cov_sym(const double[::1] x,
               const double[::1] w, const double[::1] mu, const double[::1] v):
    cdef Py_ssize_t n = x.shape[0], nq = w.shape[0]
    cdef Py_ssize_t i, j, q
    cdef double tau, acc, k0 = 0.0, two_pi = 2.0 * M_PI
    cdef double[::1] a = np.empty(nq)
    out = np.empty((n, n))
    cdef double[:, ::1] K = out
    for q in range(nq):
        a[q] = 2.0 * M_PI * M_PI * v[q] * v[q]
        k0 += w[q]
    for i in range(n):
        K[i, i] = k0
        for j in range(i + 1, n):
            tau = x[i] - x[j]
            acc = 0.0
            for q in range(nq):
                acc += w[q] * exp(-a[q] * tau * tau) * cos(two_pi * tau * mu[q])
            K[i, j] = acc
            K[j, i] = acc
    return out


def sm_grad_contract(const double[::1] x, const double[:, ::1] W,
                     const double[::1] w, const double[::1] mu, const double[::1] v):
    """0.5 * sum_ij W_ij dK_ij/dtheta for theta = (log w, mu, log v)."""
    cdef Py_ssize_t n = x.shape[0], nq = w.shape[0]
    cdef Py_ssize_t i, j, q
    cdef double tau, tau2, wij, e, arg, c, s, trace = 0.0, two_pi = 2.0 * M_PI
    cdef double[::1] a = np.empty(nq)
    out = np.zeros(3 * nq)
    cdef double[::1] g = out
    for q in range(nq):
        a[q] = 2.0 * M_PI * M_PI * v[q] * v[q]
    for i in range(n):
        trace += W[i, i]
        for j in range(i + 1, n):
            # off-diagonal pairs appear twice in the sum; the 0.5 cancels
            wij = W[i, j] + W[j, i]
            tau = x[i] - x[j]
            tau2 = tau * tau
            for q in range(nq):
                e = w[q] * exp(-a[q] * tau2)
                arg = two_pi * tau * mu[q]
                c = cos(arg)
                s = sin(arg)
                g[q] += 0.5 * wij * e * c
                g[nq + q] -= 0.5 * wij * e * s * two_pi * tau
                g[2 * nq + q] -= wij * e * c * a[q] * tau2
    for q in range(nq):
        g[q] += 0.5 * trace * w[q]
    return out
