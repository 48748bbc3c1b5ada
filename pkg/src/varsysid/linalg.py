"""Dense linear-algebra helpers shared across the package.

Conventions: Cholesky factors are lower triangular; "full-entry" matrix
gradients treat every entry of a symmetric matrix as independent, so the
symmetric part is what matters when chaining.
"""

import numpy as np
import scipy.linalg as sla

from .errors import SingularCovarianceError

LOG_2PI = float(np.log(2.0 * np.pi))


def symmetrize(mat):
    """Average a square matrix with its transpose."""
    return 0.5 * (mat + mat.T)


def exact_symmetric(mat):
    """Mirror the lower triangle so the result is bitwise symmetric."""
    low = np.tril(mat)
    return low + np.tril(mat, -1).T


def cholesky_spd(cov, *, jitter=None, context="covariance"):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    When ``jitter`` is given and the plain factorization fails, retries once
    after adding ``jitter * trace(cov) / d`` to the diagonal (borderline-PSD
    matrices occur at optimizer extremes). Raises SingularCovarianceError if
    the matrix is still not positive definite.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    if jitter is not None:
        d = cov.shape[-1]
        bump = jitter * np.trace(cov) / d
        if bump > 0 and np.isfinite(bump):
            try:
                return np.linalg.cholesky(cov + bump * np.eye(d))
            except np.linalg.LinAlgError:
                pass
    raise SingularCovarianceError(f"{context} is not positive definite")


def logdet_from_chol(chol):
    """log det(L L^T) given the lower Cholesky factor L (batched ok)."""
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    return 2.0 * np.sum(np.log(diag), axis=-1)


def solve_lower(chol, rhs):
    """Solve L x = rhs for lower-triangular L; rhs has shape (..., d)."""
    flat = np.reshape(rhs, (-1, rhs.shape[-1]))
    out = sla.solve_triangular(chol, flat.T, lower=True).T
    return out.reshape(rhs.shape)

def solve_spd(chol, rhs):
    """Solve (L L^T) x = rhs given the lower Cholesky factor L."""
    flat = np.reshape(rhs, (-1, rhs.shape[-1]))
    half = sla.solve_triangular(chol, flat.T, lower=True)
    out = sla.solve_triangular(chol.T, half, lower=False).T
    return out.reshape(rhs.shape)


def spd_inverse(chol):
    """Inverse of L L^T from its lower Cholesky factor."""
    d = chol.shape[0]
    return solve_spd(chol, np.eye(d))


def mvn_logpdf_chol(resid, chol):
    """Multivariate-normal log density at residual ``x - mean``.

    ``resid`` may carry leading batch dimensions; ``chol`` is the shared
    lower Cholesky factor of the covariance.
    """
    d = chol.shape[0]
    half = solve_lower(chol, resid)
    quad = np.sum(half * half, axis=-1)
    return -0.5 * (d * LOG_2PI + logdet_from_chol(chol) + quad)


def chol_backward(chol, chol_bar):
    """Reverse-mode differentiation through ``A -> cholesky(A)``.

    Given the lower factor L of A = L L^T and a gradient ``chol_bar`` with
    respect to the entries of L, returns the symmetric full-entry gradient
    with respect to A.
    """
    lbar = np.tril(chol_bar)
    work = np.tril(chol.T @ lbar)
    idx = np.diag_indices_from(work)
    work[idx] *= 0.5
    # A_bar = L^{-T} work L^{-1}
    tmp = sla.solve_triangular(chol, work.T, lower=True, trans="T").T
    abar = sla.solve_triangular(chol, tmp, lower=True, trans="T")
    return symmetrize(abar)


def product_backward_spd(chol, sigma_bar):
    """Reverse-mode through ``L -> Sigma = L L^T`` (L the free parameter).

    ``sigma_bar`` is a symmetric full-entry gradient with respect to Sigma;
    returns the gradient with respect to the lower-triangular entries of L.
    """
    return np.tril((sigma_bar + sigma_bar.T) @ chol)


def tril_indices(n):
    """Row-major lower-triangle index pair arrays (diagonal included)."""
    return np.tril_indices(n)


def logchol_to_chol(vec, n):
    """Expand a log-Cholesky vector to the lower factor L.

    The vector stores the lower triangle row-major; diagonal entries hold
    the logarithm of the (positive) factor diagonal.
    """
    chol = np.zeros((n, n))
    rows, cols = np.tril_indices(n)
    chol[rows, cols] = vec
    idx = np.diag_indices(n)
    chol[idx] = np.exp(chol[idx])
    return chol


def chol_to_logchol(chol):
    """Inverse of :func:`logchol_to_chol`."""
    n = chol.shape[0]
    work = chol.copy()
    idx = np.diag_indices(n)
    work[idx] = np.log(work[idx])
    rows, cols = np.tril_indices(n)
    return work[rows, cols]


def logchol_grad(chol, chol_bar):
    """Map a gradient w.r.t. L into a gradient w.r.t. its log-Cholesky vector."""
    n = chol.shape[0]
    work = np.tril(chol_bar).copy()
    idx = np.diag_indices(n)
    work[idx] = work[idx] * chol[idx]
    rows, cols = np.tril_indices(n)
    return work[rows, cols]
