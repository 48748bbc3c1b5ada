"""Pure-numpy reference implementation of the accelerated kernels."""

import numpy as np
import scipy.linalg as sla


def solve_quad_gram(chol, x):
    """SPD solve of row-stacked vectors plus quadratic and Gram reductions.

    Parameters: lower Cholesky factor ``chol`` (d, d) of a covariance, and
    ``x`` of shape (m, d). Returns ``(p, quadsum, gram)`` with
    p[i] = (L L^T)^{-1} x[i], quadsum = sum_i x[i] . p[i] and
    gram = sum_i outer(p[i], p[i]).
    """
    x = np.ascontiguousarray(x, dtype=float)
    if x.size == 0:
        d = chol.shape[0]
        return x.copy(), 0.0, np.zeros((d, d))
    half = sla.solve_triangular(chol, x.T, lower=True)
    p = np.ascontiguousarray(
        sla.solve_triangular(chol, half, lower=True, trans="T").T)
    # np.sum reduces pairwise, keeping the accumulation error O(log m)
    quadsum = float(np.sum(half * half))
    gram = p.T @ p
    return p, quadsum, gram


def marg_forward(cond, cross):
    """Marginal covariances of a per-step Gauss-Markov density.

    ``cond[0]`` is the covariance of x_0 and ``cond[k]`` the conditional
    covariance at step k; ``cross[k-1]`` the lag-one cross covariance.
    Raises np.linalg.LinAlgError (with step index in args) when a marginal
    is not positive definite.
    """
    nsamp = cond.shape[0]
    margs = np.empty_like(cond)
    margs[0] = cond[0]
    for k in range(1, nsamp):
        try:
            lk = np.linalg.cholesky(margs[k - 1])
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                f"marginal covariance not positive definite at step {k - 1}"
            ) from None
        half = sla.solve_triangular(lk, cross[k - 1].T, lower=True)
        step = half.T @ half  # X S^{-1} X^T
        full = cond[k] + step
        low = np.tril(full)
        margs[k] = low + np.tril(full, -1).T
    return margs


def marg_backward(margs, cross, sbar):
    """Reverse-mode pass through :func:`marg_forward`.

    ``sbar[k]`` accumulates full-entry gradients with respect to each
    marginal; returns gradients with respect to (cond, cross). ``sbar`` is
    not modified.
    """
    nsamp = margs.shape[0]
    sbar = sbar.copy()
    cond_bar = np.zeros_like(margs)
    cross_bar = np.zeros_like(cross)
    for k in range(nsamp - 1, 0, -1):
        lk = np.linalg.cholesky(margs[k - 1])
        half = sla.solve_triangular(lk, cross[k - 1].T, lower=True)
        gain = sla.solve_triangular(lk, half, lower=True, trans="T").T  # X S^{-1}
        cond_bar[k] += sbar[k]
        cross_bar[k - 1] += (sbar[k] + sbar[k].T) @ gain
        sbar[k - 1] -= gain.T @ sbar[k] @ gain
    cond_bar[0] += sbar[0]
    return cond_bar, cross_bar
