"""Kernel dispatch: compiled ``_ext`` when importable, NumPy fallback otherwise.

Set ``GRIDFUSE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from gridfuse import _fallback

BACKEND = "python"

if not os.environ.get("GRIDFUSE_PURE_PYTHON"):
    try:
        from gridfuse import _ext as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
else:
    _impl = _fallback

rbf_matrix = _impl.rbf_matrix
rbf_lengthscale_contraction = _impl.rbf_lengthscale_contraction
interp_hold = _impl.interp_hold
lindistflow_sweep = _impl.lindistflow_sweep

__all__ = [
    "BACKEND",
    "rbf_matrix",
    "rbf_lengthscale_contraction",
    "interp_hold",
    "lindistflow_sweep",
]
