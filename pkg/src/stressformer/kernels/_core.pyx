"""Compiled implementations of the hot kernels.

Same contracts as ``pylib``: C-contiguous float64 in, float64 out. The
tensor layer guarantees contiguity and shape agreement before calling.
"""

import numpy as np

from libc.math cimport exp, sqrt

NAME = "compiled"


def matmul(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    out_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, p
    cdef double aip
    with nogil:
        for i in range(m):
            for p in range(k):
                aip = a[i, p]
                if aip != 0.0:
                    for j in range(n):
                        out[i, j] += aip * b[p, j]
    return out_arr


def bmm(double[:, :, ::1] a, double[:, :, ::1] b):
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], k = a.shape[2], n = b.shape[2]
    out_arr = np.zeros((nb, m, n), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t s, i, j, p
    cdef double aip
    with nogil:
        for s in range(nb):
            for i in range(m):
                for p in range(k):
                    aip = a[s, i, p]
                    for j in range(n):
                        out[s, i, j] += aip * b[s, p, j]
    return out_arr


def softmax_fwd(double[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1]
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double mx, s
    with nogil:
        for i in range(r):
            mx = x[i, 0]
            for j in range(1, c):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(c):
                out[i, j] = exp(x[i, j] - mx)
                s += out[i, j]
            for j in range(c):
                out[i, j] /= s
    return out_arr


def softmax_bwd(double[:, ::1] y, double[:, ::1] dy):
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1]
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double inner
    with nogil:
        for i in range(r):
            inner = 0.0
            for j in range(c):
                inner += dy[i, j] * y[i, j]
            for j in range(c):
                out[i, j] = y[i, j] * (dy[i, j] - inner)
    return out_arr


def layer_norm_fwd(double[:, ::1] x, double[::1] gamma, double[::1] beta, double eps):
    cdef Py_ssize_t r = x.shape[0], d = x.shape[1]
    y_arr = np.empty((r, d), dtype=np.float64)
    xhat_arr = np.empty((r, d), dtype=np.float64)
    rstd_arr = np.empty(r, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    cdef Py_ssize_t i, j
    cdef double mean, var, diff, rs
    with nogil:
        for i in range(r):
            mean = 0.0
            for j in range(d):
                mean += x[i, j]
            mean /= d
            var = 0.0
            for j in range(d):
                diff = x[i, j] - mean
                var += diff * diff
            var /= d
            rs = 1.0 / sqrt(var + eps)
            rstd[i] = rs
            for j in range(d):
                xhat[i, j] = (x[i, j] - mean) * rs
                y[i, j] = xhat[i, j] * gamma[j] + beta[j]
    return y_arr, xhat_arr, rstd_arr


def layer_norm_bwd(double[:, ::1] dy, double[:, ::1] xhat, double[::1] gamma,
                   double[::1] rstd):
    cdef Py_ssize_t r = dy.shape[0], d = dy.shape[1]
    dx_arr = np.empty((r, d), dtype=np.float64)
    dgamma_arr = np.zeros(d, dtype=np.float64)
    dbeta_arr = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgamma = dgamma_arr
    cdef double[::1] dbeta = dbeta_arr
    cdef Py_ssize_t i, j
    cdef double m1, m2, dyg
    with nogil:
        for i in range(r):
            m1 = 0.0
            m2 = 0.0
            for j in range(d):
                dyg = dy[i, j] * gamma[j]
                m1 += dyg
                m2 += dyg * xhat[i, j]
            m1 /= d
            m2 /= d
            for j in range(d):
                dyg = dy[i, j] * gamma[j]
                dx[i, j] = rstd[i] * (dyg - m1 - xhat[i, j] * m2)
                dgamma[j] += dy[i, j] * xhat[i, j]
                dbeta[j] += dy[i, j]
    return dx_arr, dgamma_arr, dbeta_arr


def relu_fwd(x):
    x_flat_arr = np.ascontiguousarray(x).reshape(-1)
    out_arr = np.empty_like(x_flat_arr)
    cdef double[::1] xv = x_flat_arr
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            out[i] = xv[i] if xv[i] > 0.0 else 0.0
    return out_arr.reshape(np.asarray(x).shape)


def relu_bwd(x, dy):
    x_flat_arr = np.ascontiguousarray(x).reshape(-1)
    dy_flat_arr = np.ascontiguousarray(dy).reshape(-1)
    out_arr = np.empty_like(x_flat_arr)
    cdef double[::1] xv = x_flat_arr
    cdef double[::1] dyv = dy_flat_arr
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            out[i] = dyv[i] if xv[i] > 0.0 else 0.0
    return out_arr.reshape(np.asarray(x).shape)


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, int t):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef double mhat, vhat
    with nogil:
        for i in range(n):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            mhat = m[i] / bc1
            vhat = v[i] / bc2
            p[i] -= lr * mhat / (sqrt(vhat) + eps)
