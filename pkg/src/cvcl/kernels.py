"""Backend selection for the per-batch loss kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``CVCL_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from cvcl import _pykernels

_compiled = None
if not os.environ.get("CVCL_PURE_PYTHON"):
    try:
        from cvcl import _ckernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _pykernels


def available_backends():
    names = {"python": _pykernels}
    if _compiled is not None:
        names["cython"] = _compiled
    return names


def _c(a, dtype=None):
    return np.ascontiguousarray(a, dtype=dtype)


def target_distribution(H, eps=1e-12):
    return _impl.target_distribution(_c(H), eps)


def target_distribution_backward(H, G, eps=1e-12):
    H = _c(H)
    return _impl.target_distribution_backward(H, _c(G, H.dtype), eps)


def contrastive_pair(A, B, tau, grad=True):
    A = _c(A)
    return _impl.contrastive_pair(A, _c(B, A.dtype), float(tau), grad)


def consistency(P, eps=1e-12):
    return _impl.consistency(_c(P), eps)
