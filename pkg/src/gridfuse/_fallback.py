"""Pure NumPy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ext`` (Cython).
"""

from __future__ import annotations

import numpy as np


def rbf_matrix(x1, x2, signal_var, lengthscale):
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    d = x1[:, None] - x2[None, :]
    return signal_var * np.exp(-0.5 * (d / lengthscale) ** 2)


def rbf_lengthscale_contraction(x, weights, signal_var, lengthscale):
    """Return sum_ij W_ij * dK_ij/dlog(l) for the RBF kernel on points ``x``."""
    x = np.asarray(x, dtype=np.float64)
    d2 = ((x[:, None] - x[None, :]) / lengthscale) ** 2
    return float(np.sum(weights * signal_var * np.exp(-0.5 * d2) * d2))


def interp_hold(t, v, q):
    t = np.asarray(t, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    # np.interp holds the end values outside [t[0], t[-1]].
    return np.interp(q, t, v)


def lindistflow_sweep(parent, r, x, p, q, w0):
    """Branch-flow recursion for a batch of load snapshots.

    ``parent[i] < i`` for every non-root node (topological order, root at 0).
    ``p``/``q`` have shape (T, n). Returns squared magnitudes and angles, (T, n) each.
    """
    parent = np.asarray(parent, dtype=np.intp)
    p = np.array(p, dtype=np.float64, ndmin=2)
    q = np.array(q, dtype=np.float64, ndmin=2)
    n = parent.size
    pf = p.copy()
    qf = q.copy()
    for i in range(n - 1, 0, -1):
        pf[:, parent[i]] += pf[:, i]
        qf[:, parent[i]] += qf[:, i]
    w = np.empty_like(pf)
    th = np.empty_like(pf)
    w[:, 0] = w0
    th[:, 0] = 0.0
    for i in range(1, n):
        j = parent[i]
        w[:, i] = w[:, j] - 2.0 * (r[i] * pf[:, i] + x[i] * qf[:, i])
        th[:, i] = th[:, j] - (x[i] * pf[:, i] - r[i] * qf[:, i])
    return w, th
