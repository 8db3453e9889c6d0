# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``. Same signatures."""

import numpy as np
from libc.math cimport exp, log, INFINITY

DEF MAXD = 3


def toric_max(double[:, ::1] x, double[::1] t, double[:, ::1] aff_a,
              double[::1] aff_b, double[::1] log_A, double[::1] log_b):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t K = aff_b.shape[0], J = log_A.shape[0]
    cdef Py_ssize_t i, k, j
    cdef double best, v
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        best = -INFINITY
        for k in range(K):
            v = aff_b[k]
            for j in range(d):
                v += aff_a[k, j] * x[i, j]
            if v > best:
                best = v
        for k in range(J):
            v = log_A[k] * t[i] + log_b[k]
            if v > best:
                best = v
        o[i] = best
    return out


cdef inline double _det(double H[MAXD][MAXD], Py_ssize_t d) nogil:
    if d == 1:
        return H[0][0]
    if d == 2:
        return H[0][0] * H[1][1] - H[0][1] * H[1][0]
    return (H[0][0] * (H[1][1] * H[2][2] - H[1][2] * H[2][1])
            - H[0][1] * (H[1][0] * H[2][2] - H[1][2] * H[2][0])
            + H[0][2] * (H[1][0] * H[2][1] - H[1][1] * H[2][0]))


def softmax_ma_density(double[:, ::1] x, double[::1] t, double[:, ::1] q,
                       double[:, ::1] aff_a, double[::1] aff_b,
                       double[::1] log_A, double[::1] log_b, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t K = aff_b.shape[0], J = log_A.shape[0]
    cdef Py_ssize_t KJ = K + J
    if d > MAXD:
        raise ValueError("compiled kernel supports d <= 3")
    g_out = np.empty(n, dtype=np.float64)
    det_out = np.empty(n, dtype=np.float64)
    cdef double[::1] go = g_out
    cdef double[::1] do = det_out
    if KJ == 0:
        g_out[:] = 0.0
        det_out[:] = 0.0
        return g_out, det_out
    cdef double[::1] h = np.empty(KJ)
    cdef double[::1] w = np.empty(KJ)
    cdef double grad[MAXD]
    cdef double m[MAXD]
    cdef double H[MAXD][MAXD]
    cdef Py_ssize_t i, k, a, b
    cdef double hmax, z, v, c_log, inv_eps = 1.0 / eps
    for i in range(n):
        hmax = -INFINITY
        for k in range(K):
            v = aff_b[k]
            for a in range(d):
                v += aff_a[k, a] * x[i, a]
            h[k] = v
            if v > hmax:
                hmax = v
        for k in range(J):
            v = log_A[k] * t[i] + log_b[k]
            h[K + k] = v
            if v > hmax:
                hmax = v
        z = 0.0
        for k in range(KJ):
            w[k] = exp((h[k] - hmax) * inv_eps)
            z += w[k]
        for k in range(KJ):
            w[k] /= z
        go[i] = hmax + eps * log(z)
        for a in range(d):
            m[a] = 0.0
        c_log = 0.0
        for k in range(K):
            for a in range(d):
                m[a] += w[k] * aff_a[k, a]
        for k in range(J):
            c_log += w[K + k] * log_A[k]
            for a in range(d):
                m[a] += w[K + k] * log_A[k] * q[i, a]
        for a in range(d):
            for b in range(d):
                H[a][b] = 0.0
        for k in range(KJ):
            for a in range(d):
                if k < K:
                    grad[a] = aff_a[k, a] - m[a]
                else:
                    grad[a] = log_A[k - K] * q[i, a] - m[a]
            for a in range(d):
                for b in range(d):
                    H[a][b] += w[k] * grad[a] * grad[b]
        for a in range(d):
            for b in range(d):
                H[a][b] = H[a][b] * inv_eps - c_log * q[i, a] * q[i, b]
            H[a][a] += c_log * q[i, a]
        do[i] = _det(H, d)
    return g_out, det_out
