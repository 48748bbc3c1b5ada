"""Markov-Gaussian assumed densities over state paths.

Two parameterizations of q(x_{0:N}) = q(x_0) prod_k q(x_k | x_{k-1}):

* :class:`SteadyStateGaussMarkov` shares one conditional covariance and one
  lag-one cross covariance across all steps; the stationary marginal is the
  fixed point of S = Sigma_cond + Sigma_cross S^{-1} Sigma_cross^T.
* :class:`GeneralGaussMarkov` carries per-step covariances and can represent
  the exact smoothing posterior of a linear-Gaussian system.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (NonFiniteError, NonStationaryError,
                     SingularCovarianceError, VarsysidError)
from .linalg import cholesky_spd, exact_symmetric, logdet_from_chol, solve_spd

LOG_2PI_E = float(np.log(2.0 * np.pi) + 1.0)

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 200


def stationary_marginal(sigma_cond, sigma_cross, *, tol=FIXED_POINT_TOL,
                        max_iter=FIXED_POINT_MAX_ITER):
    """Stationary marginal covariance of the steady-state process.

    Solves S = Sigma_cond + Sigma_cross S^{-1} Sigma_cross^T to relative
    tolerance ``tol`` by fixed-point iteration seeded at Sigma_cond. The
    plain iteration converges at rate rho(M)^2 with M = Sigma_cross S^{-1},
    which stalls for slowly mixing processes (rho close to 1), so a Newton
    refinement on the same equation takes over when the sweep stalls or runs
    out of budget. Any positive-definite solution automatically satisfies
    rho(M) < 1 (S - M S M^T = Sigma_cond is a strict Lyapunov certificate).

    Raises
    ------
    NonStationaryError
        If no positive-definite fixed point is found, which signals a
        conditional/cross pair without a valid stationary process (spectral
        radius of the implied transition >= 1).
    """
    cond = np.asarray(sigma_cond, dtype=float)
    cross = np.asarray(sigma_cross, dtype=float)
    if not (np.all(np.isfinite(cond)) and np.all(np.isfinite(cross))):
        raise NonFiniteError("covariance parameters are non-finite")
    cholesky_spd(cond, context="conditional covariance Sigma_cond")
    if not np.any(cross):
        return cond.copy()
    s = cond.copy()
    resid = np.inf
    total = 0
    for it in range(max_iter):
        try:
            # cross @ S^{-1} @ cross.T, via rows of cross times S^{-1}
            step = solve_spd(np.linalg.cholesky(s), cross) @ cross.T
        except np.linalg.LinAlgError:
            raise NonStationaryError(resid, it) from None
        s_next = exact_symmetric(cond + step)
        if not np.all(np.isfinite(s_next)):
            raise NonStationaryError(resid, it + 1)
        prev = resid
        resid = np.linalg.norm(s_next - s) / max(np.linalg.norm(s_next), 1e-300)
        s = s_next
        total = it + 1
        if resid <= tol:
            # polish to the numerical noise floor: truncating at tol would
            # leave discrete kinks in objectives built on top of S
            return _newton_polish(cond, cross, s)
        if it >= 25 and resid > 0.6 * prev:
            break  # linear rate too slow; refine with Newton
    s = _stationary_newton(cond, cross, s, tol, total)
    return _newton_polish(cond, cross, s)


def _newton_polish(cond, cross, s, rounds=2):
    """Drive the fixed-point residual to the machine-precision floor.

    One or two Newton corrections from a 1e-12-accurate iterate; each round
    roughly squares the residual, so the result is as exact as the dtype
    allows and downstream objectives stay smooth in the parameters.
    """
    nx = cond.shape[0]
    eye = np.eye(nx * nx)
    for _ in range(rounds):
        try:
            gain = solve_spd(np.linalg.cholesky(s), cross)
            gap = exact_symmetric(cond + gain @ cross.T) - s
            delta = np.linalg.solve(eye + np.kron(gain, gain), gap.ravel())
            cand = exact_symmetric(s + delta.reshape(nx, nx))
            np.linalg.cholesky(cand)
        except np.linalg.LinAlgError:
            return s
        if not np.all(np.isfinite(cand)):
            return s
        s = cand
    return s


def _stationary_newton(cond, cross, s, tol, start_iter, max_iter=50):
    """Newton refinement of G(S) = S - cond - cross S^{-1} cross^T = 0.

    Each step solves the linear sensitivity equation dS + M dS M^T = -G(S)
    by Kronecker vectorization (state dimensions are small here).
    """
    nx = cond.shape[0]
    eye = np.eye(nx * nx)
    resid = np.inf
    for it in range(max_iter):
        try:
            gain = solve_spd(np.linalg.cholesky(s), cross)  # M = cross S^{-1}
        except np.linalg.LinAlgError:
            raise NonStationaryError(resid, start_iter + it) from None
        gap = exact_symmetric(cond + gain @ cross.T) - s
        if not np.all(np.isfinite(gap)):
            raise NonStationaryError(resid, start_iter + it)
        resid = np.linalg.norm(gap) / max(np.linalg.norm(s), 1e-300)
        if resid <= tol:
            return s
        try:
            delta = np.linalg.solve(eye + np.kron(gain, gain), gap.ravel())
        except np.linalg.LinAlgError:
            raise NonStationaryError(resid, start_iter + it) from None
        delta = delta.reshape(nx, nx)
        step = 1.0
        for _ in range(30):  # keep the iterate positive definite
            cand = exact_symmetric(s + step * delta)
            try:
                np.linalg.cholesky(cand)
                break
            except np.linalg.LinAlgError:
                step *= 0.5
        else:
            raise NonStationaryError(resid, start_iter + it)
        s = cand
    raise NonStationaryError(resid, start_iter + max_iter)


@dataclass(frozen=True)
class SteadyStateGaussMarkov:
    """Steady-state Markov-Gaussian density over x_{0:N}.

    Fields: ``mu`` of shape (N+1, nx); shared conditional covariance
    ``sigma_cond`` (positive definite) and lag-one cross covariance
    ``sigma_cross``, both (nx, nx). All marginals equal the stationary
    fixed point.
    """

    mu: np.ndarray
    sigma_cond: np.ndarray
    sigma_cross: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_2d(np.asarray(self.mu, float)))
        object.__setattr__(self, "sigma_cond",
                           np.atleast_2d(np.asarray(self.sigma_cond, float)))
        object.__setattr__(self, "sigma_cross",
                           np.atleast_2d(np.asarray(self.sigma_cross, float)))
        object.__setattr__(self, "_marg_cache", [None])

    @property
    def num_steps(self):
        """N, the number of transitions (samples minus one)."""
        return self.mu.shape[0] - 1

    @property
    def nx(self):
        return self.mu.shape[1]

    def stationary(self):
        """Stationary marginal covariance (cached fixed point)."""
        if self._marg_cache[0] is None:
            self._marg_cache[0] = stationary_marginal(self.sigma_cond,
                                                      self.sigma_cross)
        return self._marg_cache[0]

    def marginal_moments(self, k):
        """Mean and covariance of x_k (covariance is k-independent)."""
        self._check_index(k, 0)
        return self.mu[k], self.stationary()

    def pair_moments(self, k):
        """Mean and covariance of the pair (x_{k-1}, x_k), k in 1..N."""
        self._check_index(k, 1)
        marg = self.stationary()
        mean = np.concatenate([self.mu[k - 1], self.mu[k]])
        cov = np.block([[marg, self.sigma_cross.T],
                        [self.sigma_cross, marg]])
        return mean, cov

    def entropy(self):
        """Differential entropy of the full path density, constants included."""
        n = self.num_steps
        nx = self.nx
        ld_marg = logdet_from_chol(cholesky_spd(self.stationary(),
                                                context="stationary marginal"))
        ld_cond = logdet_from_chol(cholesky_spd(self.sigma_cond,
                                                context="Sigma_cond"))
        return 0.5 * ld_marg + 0.5 * n * ld_cond + 0.5 * (n + 1) * nx * LOG_2PI_E

    def as_general(self):
        """Equivalent per-step representation (marginals at the fixed point)."""
        n = self.num_steps
        marg = self.stationary()
        cond = np.concatenate([marg[None],
                               np.broadcast_to(self.sigma_cond,
                                               (n,) + self.sigma_cond.shape)])
        cross = np.broadcast_to(self.sigma_cross, (n,) + self.sigma_cross.shape)
        return GeneralGaussMarkov(self.mu.copy(), cond.copy(), cross.copy())

    def _check_index(self, k, low):
        if not low <= k <= self.num_steps:
            raise IndexError(f"time index {k} outside {low}..{self.num_steps}")


@dataclass(frozen=True)
class GeneralGaussMarkov:
    """Markov-Gaussian density with per-step covariances.

    ``sigma_cond[0]`` is the covariance of x_0 and ``sigma_cond[k]`` for
    k >= 1 the conditional covariance of x_k given x_{k-1}; ``sigma_cross[k-1]``
    is the lag-one cross covariance Cov(x_k, x_{k-1}). Marginals follow the
    recursion Sigma_k = Sigma_{k|k-1} + X_k Sigma_{k-1}^{-1} X_k^T.
    """

    mu: np.ndarray
    sigma_cond: np.ndarray
    sigma_cross: np.ndarray

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.mu, float))
        cond = np.asarray(self.sigma_cond, dtype=float)
        cross = np.asarray(self.sigma_cross, dtype=float)
        n = mu.shape[0] - 1
        nx = mu.shape[1]
        if cond.shape != (n + 1, nx, nx):
            raise VarsysidError(f"sigma_cond must have shape {(n + 1, nx, nx)}, "
                                f"got {cond.shape}")
        if cross.shape != (n, nx, nx):
            raise VarsysidError(f"sigma_cross must have shape {(n, nx, nx)}, "
                                f"got {cross.shape}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma_cond", cond)
        object.__setattr__(self, "sigma_cross", cross)
        object.__setattr__(self, "_marg_cache", [None])

    @property
    def num_steps(self):
        return self.mu.shape[0] - 1

    @property
    def nx(self):
        return self.mu.shape[1]

    def marginals(self):
        """All marginal covariances via the forward recursion (cached)."""
        if self._marg_cache[0] is None:
            from . import _kernels
            try:
                self._marg_cache[0] = _kernels.marg_forward(self.sigma_cond,
                                                            self.sigma_cross)
            except np.linalg.LinAlgError as exc:
                raise SingularCovarianceError(str(exc)) from None
        return self._marg_cache[0]

    def marginal_moments(self, k):
        if not 0 <= k <= self.num_steps:
            raise IndexError(f"time index {k} outside 0..{self.num_steps}")
        return self.mu[k], self.marginals()[k]

    def pair_moments(self, k):
        if not 1 <= k <= self.num_steps:
            raise IndexError(f"time index {k} outside 1..{self.num_steps}")
        margs = self.marginals()
        mean = np.concatenate([self.mu[k - 1], self.mu[k]])
        cross = self.sigma_cross[k - 1]
        cov = np.block([[margs[k - 1], cross.T], [cross, margs[k]]])
        return mean, cov

    def entropy(self):
        """Chain-rule entropy: sum of conditional entropies, constants included."""
        n = self.num_steps
        nx = self.nx
        total = 0.5 * (n + 1) * nx * LOG_2PI_E
        parts = [logdet_from_chol(cholesky_spd(self.sigma_cond[k],
                                               context=f"Sigma_cond[{k}]"))
                 for k in range(n + 1)]
        return total + 0.5 * math.fsum(parts)
