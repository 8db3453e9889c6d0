"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``PSHSYM_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_compiled = None
if os.environ.get("PSHSYM_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _compiled

        BACKEND = "compiled"
    except ImportError:
        _compiled = None


def _c(a, shape2=None):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if shape2 is not None:
        a = a.reshape(-1, shape2)
    return a


def toric_max(x, t, aff_a, aff_b, log_A, log_b, backend=None):
    impl = _pick(backend)
    x = _c(x)
    d = x.shape[1]
    args = (x, _c(t), _c(aff_a, d), _c(aff_b), _c(log_A), _c(log_b))
    if impl is _kernels_py:
        return _kernels_py.toric_max(*args)
    return np.asarray(impl.toric_max(*args))


def softmax_ma_density(x, t, q, aff_a, aff_b, log_A, log_b, eps, backend=None):
    x = _c(x)
    d = x.shape[1]
    impl = _pick(backend)
    if impl is not _kernels_py and d > 3:
        impl = _kernels_py
    args = (x, _c(t), _c(q), _c(aff_a, d), _c(aff_b), _c(log_A), _c(log_b), float(eps))
    g, det = impl.softmax_ma_density(*args)
    return np.asarray(g), np.asarray(det)


def _pick(backend):
    if backend is None:
        return _compiled if _compiled is not None else _kernels_py
    if backend == "python":
        return _kernels_py
    if backend == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")
