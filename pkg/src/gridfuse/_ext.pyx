# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``gridfuse._fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def rbf_matrix(x1, x2, double signal_var, double lengthscale):
    cdef const double[::1] a = np.ascontiguousarray(x1, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(x2, dtype=np.float64)
    cdef Py_ssize_t n1 = a.shape[0], n2 = b.shape[0], i, j
    out = np.empty((n1, n2), dtype=np.float64)
    cdef double[:, ::1] k = out
    cdef double inv = 1.0 / lengthscale, d
    if n1 == n2 and (x1 is x2):
        for i in range(n1):
            k[i, i] = signal_var
            for j in range(i):
                d = (a[i] - a[j]) * inv
                k[i, j] = signal_var * exp(-0.5 * d * d)
                k[j, i] = k[i, j]
        return out
    for i in range(n1):
        for j in range(n2):
            d = (a[i] - b[j]) * inv
            k[i, j] = signal_var * exp(-0.5 * d * d)
    return out


def rbf_lengthscale_contraction(x, weights, double signal_var, double lengthscale):
    cdef const double[::1] a = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] wt = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], i, j
    cdef double inv = 1.0 / lengthscale, d2, acc = 0.0
    for i in range(n):
        for j in range(i):
            d2 = (a[i] - a[j]) * inv
            d2 = d2 * d2
            acc += (wt[i, j] + wt[j, i]) * exp(-0.5 * d2) * d2
    return signal_var * acc


def interp_hold(t, v, q):
    cdef const double[::1] ts = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] vs = np.ascontiguousarray(v, dtype=np.float64)
    cdef const double[::1] qs = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t n = ts.shape[0], m = qs.shape[0], i, lo, hi, mid
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef double s
    for i in range(m):
        s = qs[i]
        if s <= ts[0]:
            o[i] = vs[0]
        elif s >= ts[n - 1]:
            o[i] = vs[n - 1]
        else:
            lo = 0
            hi = n - 1
            while hi - lo > 1:
                mid = (lo + hi) >> 1
                if ts[mid] <= s:
                    lo = mid
                else:
                    hi = mid
            if s == ts[lo]:
                o[i] = vs[lo]
            else:
                o[i] = vs[lo] + (vs[hi] - vs[lo]) * (s - ts[lo]) / (ts[hi] - ts[lo])
    return out


def lindistflow_sweep(parent, r, x, p, q, double w0):
    cdef const Py_ssize_t[::1] par = np.ascontiguousarray(parent, dtype=np.intp)
    cdef const double[::1] rr = np.ascontiguousarray(r, dtype=np.float64)
    cdef const double[::1] xx = np.ascontiguousarray(x, dtype=np.float64)
    pf_arr = np.array(p, dtype=np.float64, ndmin=2, order="C", copy=True)
    qf_arr = np.array(q, dtype=np.float64, ndmin=2, order="C", copy=True)
    cdef double[:, ::1] pf = pf_arr
    cdef double[:, ::1] qf = qf_arr
    cdef Py_ssize_t T = pf.shape[0], n = par.shape[0], t, i, j
    w_arr = np.empty((T, n), dtype=np.float64)
    th_arr = np.empty((T, n), dtype=np.float64)
    cdef double[:, ::1] w = w_arr
    cdef double[:, ::1] th = th_arr
    for t in range(T):
        for i in range(n - 1, 0, -1):
            j = par[i]
            pf[t, j] += pf[t, i]
            qf[t, j] += qf[t, i]
        w[t, 0] = w0
        th[t, 0] = 0.0
        for i in range(1, n):
            j = par[i]
            w[t, i] = w[t, j] - 2.0 * (rr[i] * pf[t, i] + xx[i] * qf[t, i])
            th[t, i] = th[t, j] - (xx[i] * pf[t, i] - rr[i] * qf[t, i])
    return w_arr, th_arr
