"""Backend selection for the hot numeric kernels.

The compiled extension ``_ckernels`` is used when it imports cleanly; the
NumPy fallback in ``_pykernels`` is used otherwise, or when the environment
variable ``SPHEREFIELD_PURE_PYTHON`` is set to ``1``.
"""
import os

import numpy as np

from . import _pykernels as python_backend

try:
    if os.environ.get("SPHEREFIELD_PURE_PYTHON", "") == "1":
        raise ImportError("pure-Python backend forced by environment")
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"



def legendre_series(coef, x):
    """sum_l coef[l] P_l(x), shaped like ``x``."""
    xa = np.asarray(x, dtype=float)
    out = _impl.legendre_series(coef, np.ascontiguousarray(xa.ravel()))
    return np.asarray(out).reshape(xa.shape)


def legendre_gap_series(coef, theta):
    """sum_l coef[l] (1 - P_l(cos theta)), shaped like ``theta``."""
    ta = np.asarray(theta, dtype=float)
    out = _impl.legendre_gap_series(coef, np.ascontiguousarray(ta.ravel()))
    return np.asarray(out).reshape(ta.shape)


alm_rows = _impl.alm_rows


def max_pairwise_distance(pts):
    """Largest Euclidean distance between rows of ``pts`` (n, d)."""
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 2 and pts.shape[1] == 1 and pts.shape[0]:
        # on a line the diameter is the range
        return float(pts.max() - pts.min())
    return _impl.max_pairwise_distance(np.ascontiguousarray(pts))


fps_pack = _impl.fps_pack
assign_children = _impl.assign_children

__all__ = [
    "BACKEND",
    "legendre_series",
    "legendre_gap_series",
    "alm_rows",
    "max_pairwise_distance",
    "fps_pack",
    "assign_children",
    "python_backend",
    "compiled_backend",
]
