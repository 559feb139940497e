# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of ``_kernels_py``; same names, same contracts."""
import numpy as np
from libc.math cimport exp, sqrt, INFINITY

cdef double QUICK_GELU_ALPHA = 1.702


def layernorm_forward(const double[:, ::1] x, const double[::1] gamma,
                      const double[::1] beta, double eps=1e-5):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out = np.empty((n, d), dtype=np.float64)
    xhat = np.empty((n, d), dtype=np.float64)
    rstd = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[:, ::1] xh = xhat
    cdef double[::1] rs = rstd
    cdef double mu, var, r, c
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            c = x[i, j] - mu
            var += c * c
        var /= d
        r = 1.0 / sqrt(var + eps)
        rs[i] = r
        for j in range(d):
            c = (x[i, j] - mu) * r
            xh[i, j] = c
            o[i, j] = c * gamma[j] + beta[j]
    return out, xhat, rstd


def layernorm_backward(const double[:, ::1] dy, const double[:, ::1] xhat,
                       const double[::1] rstd, const double[::1] gamma):
    cdef Py_ssize_t n = dy.shape[0], d = dy.shape[1], i, j
    dx = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] o = dx
    cdef double mg, mgx, g
    for i in range(n):
        mg = 0.0
        mgx = 0.0
        for j in range(d):
            g = dy[i, j] * gamma[j]
            mg += g
            mgx += g * xhat[i, j]
        mg /= d
        mgx /= d
        for j in range(d):
            o[i, j] = rstd[i] * (dy[i, j] * gamma[j] - mg - xhat[i, j] * mgx)
    return dx


def softmax_forward(const double[:, ::1] s, Py_ssize_t causal_len=0):
    cdef Py_ssize_t n = s.shape[0], d = s.shape[1], i, j, lim
    out = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double m, tot, e
    for i in range(n):
        lim = d if causal_len == 0 else (i % causal_len) + 1
        if lim > d:
            lim = d
        m = -INFINITY
        for j in range(lim):
            if s[i, j] > m:
                m = s[i, j]
        tot = 0.0
        for j in range(lim):
            e = exp(s[i, j] - m)
            o[i, j] = e
            tot += e
        for j in range(lim):
            o[i, j] /= tot
    return out


def softmax_backward(const double[:, ::1] dy, const double[:, ::1] y):
    cdef Py_ssize_t n = dy.shape[0], d = dy.shape[1], i, j
    dx = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] o = dx
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += dy[i, j] * y[i, j]
        for j in range(d):
            o[i, j] = y[i, j] * (dy[i, j] - acc)
    return dx


def quick_gelu_forward(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out = np.empty((n, d), dtype=np.float64)
    sig = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[:, ::1] sg = sig
    cdef double v
    for i in range(n):
        for j in range(d):
            v = 1.0 / (1.0 + exp(-QUICK_GELU_ALPHA * x[i, j]))
            sg[i, j] = v
            o[i, j] = x[i, j] * v
    return out, sig


def quick_gelu_backward(const double[:, ::1] dy, const double[:, ::1] x,
                        const double[:, ::1] sig):
    cdef Py_ssize_t n = dy.shape[0], d = dy.shape[1], i, j
    dx = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] o = dx
    cdef double s
    for i in range(n):
        for j in range(d):
            s = sig[i, j]
            o[i, j] = dy[i, j] * (s + QUICK_GELU_ALPHA * x[i, j] * s * (1.0 - s))
    return dx
