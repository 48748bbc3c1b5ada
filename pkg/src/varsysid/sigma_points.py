"""Equal-weight sigma points (no center point) for Gaussian expectations.

For a d-dimensional Gaussian the set holds the 2d points mean +- sqrt(d) L e_i
with L the lower Cholesky factor of the covariance, each carrying weight
1/(2d). Weighted sums of any quadratic function reproduce the exact Gaussian
expectation, which is what makes the objective exact for linear models.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError
from .linalg import cholesky_spd

JITTER = 1e-12


@dataclass(frozen=True)
class SigmaSet:
    """2d points of dimension d, all with weight 1/(2d)."""

    points: np.ndarray
    weight: float


def generate(mean, cov):
    """Sigma points matching ``mean`` and ``cov`` exactly.

    Points are ordered [mean + sqrt(d) L e_1, ..., mean + sqrt(d) L e_d,
    mean - sqrt(d) L e_1, ...]. Near-singular covariances get one shot of
    diagonal jitter (1e-12 * trace / d) before failing.
    """
    mean = np.asarray(mean, dtype=float)
    d = mean.shape[-1]
    chol = cholesky_spd(cov, jitter=JITTER, context="sigma-point covariance")
    offsets = math.sqrt(d) * chol.T
    points = np.concatenate([mean + offsets, mean - offsets], axis=0)
    return SigmaSet(points=points, weight=1.0 / (2 * d))


def expect_logpdf(sigma_set, logpdf):
    """Equal-weight quadrature of a log-density over the sigma points."""
    values = []
    for i, point in enumerate(sigma_set.points):
        val = float(logpdf(point))
        if not np.isfinite(val):
            raise NonFiniteError("log-density non-finite at sigma point",
                                 index=i)
        values.append(val)
    return sigma_set.weight * math.fsum(values)
