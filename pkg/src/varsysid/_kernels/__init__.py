"""Hot numerical kernels with a compiled core and a pure-numpy fallback.

The Cython extension (``varsysid._kernels._speedups``) fuses the per-sample
loops that dominate objective/gradient evaluation. It is selected at import
time when available; set ``VARSYSID_PURE_PYTHON=1`` to force the reference
implementation. Both backends implement identical contracts:

``solve_quad_gram(chol, x)``
    Row-wise SPD solve p = (L L^T)^{-1} x plus the total quadratic sum
    sum_m x_m . p_m and the Gram matrix sum_m p_m p_m^T.

``marg_forward(cond, cross)``
    Marginal covariance recursion S_k = C_k + X_k S_{k-1}^{-1} X_k^T.

``marg_backward(margs, cross, sbar)``
    Reverse-mode accumulation through the same recursion.
"""

import os

from . import reference

_IMPL = reference
backend_name = "reference"

if not os.environ.get("VARSYSID_PURE_PYTHON"):
    try:
        from . import _speedups as _IMPL  # noqa: F811
        backend_name = "compiled"
    except ImportError:
        pass


def solve_quad_gram(chol, x):
    return _IMPL.solve_quad_gram(chol, x)


def marg_forward(cond, cross):
    return _IMPL.marg_forward(cond, cross)


def marg_backward(margs, cross, sbar):
    return _IMPL.marg_backward(margs, cross, sbar)


def get_backends():
    """(name, module) pairs of every available backend, for benchmarks/tests."""
    pairs = [("reference", reference)]
    try:
        from . import _speedups
        pairs.append(("compiled", _speedups))
    except ImportError:
        pass
    return pairs
