"""Exact inference for discretized linear-Gaussian state-space models.

Serves two roles: the verification oracle for the variational estimator
(exact log-likelihood and smoothing posterior) and the steady-state filter
behind the one-step-prediction evaluation criterion.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, SingularCovarianceError
from .gauss_markov import GeneralGaussMarkov
from .linalg import (LOG_2PI, cholesky_spd, logdet_from_chol, solve_spd,
                     symmetrize)
from .model import LtiModel, em_process_cov

DIFFUSE_SCALE = 1e8


@dataclass(frozen=True)
class LgssDiscrete:
    """Discrete-time linear-Gaussian system.

    x_k = Phi x_{k-1} + Gamma_u u_{k-1} + bias_x + w_k,   w ~ N(0, Q)
    y_k = C x_k + D u_k + bias_y + v_k,                   v ~ N(0, R)
    """

    phi: np.ndarray
    gamma_u: np.ndarray
    bias_x: np.ndarray
    q: np.ndarray
    c: np.ndarray
    d: np.ndarray
    bias_y: np.ndarray
    r: np.ndarray

    @property
    def nx(self):
        return self.phi.shape[0]

    @property
    def ny(self):
        return self.c.shape[0]

    @classmethod
    def from_lti(cls, model: LtiModel, theta, period):
        """Euler discretization of a continuous-time LTI model.

        Phi = I + T A, Gamma_u = T B, bias_x = T bias_state, Q = T G G^T;
        the output equation is unchanged. The implied transition density is
        identical to the model's Euler-Maruyama density.
        """
        m = model.matrices(theta)
        nx = model.dims.nx
        return cls(
            phi=np.eye(nx) + period * m["a"],
            gamma_u=period * m["b"],
            bias_x=period * m["bias_state"],
            q=em_process_cov(model, period, theta),
            c=m["c"],
            d=m["d"],
            bias_y=m["bias_output"],
            r=model.meas_cov(theta),
        )


@dataclass
class FilterResult:
    """Forward Kalman-filter pass over one record."""

    predicted_means: np.ndarray
    predicted_covs: np.ndarray
    updated_means: np.ndarray
    updated_covs: np.ndarray
    innovations: list
    innovation_covs: list
    log_likelihood: float


def _diffuse_init(sys):
    kappa = DIFFUSE_SCALE * np.median(np.diag(sys.q))
    return np.zeros(sys.nx), kappa * np.eye(sys.nx)


def kf_loglik(sys, dataset, prior_mean=None, prior_cov=None):
    """Kalman filter with exact Gaussian log-likelihood.

    Missing output channels (``dataset.y_mask`` false entries) are dropped
    from the update at that sample. When no prior is given, a diffuse initial
    state is approximated by covariance 1e8 * median(diag(Q)) * I.
    """
    nx, ny = sys.nx, sys.ny
    u, y, mask = dataset.u, dataset.y, dataset.y_mask
    nsamp = y.shape[0]
    if prior_mean is None or prior_cov is None:
        prior_mean, prior_cov = _diffuse_init(sys)

    pred_means = np.empty((nsamp, nx))
    pred_covs = np.empty((nsamp, nx, nx))
    upd_means = np.empty((nsamp, nx))
    upd_covs = np.empty((nsamp, nx, nx))
    innovations = []
    innovation_covs = []
    loglik_terms = []

    mean = np.asarray(prior_mean, dtype=float)
    cov = np.asarray(prior_cov, dtype=float)
    for k in range(nsamp):
        pred_means[k] = mean
        pred_covs[k] = cov
        obs = mask[k]
        if obs.any():
            csub = sys.c[obs]
            dsub = sys.d[obs]
            rsub = sys.r[np.ix_(obs, obs)]
            innov = y[k, obs] - (csub @ mean + dsub @ u[k] + sys.bias_y[obs])
            s_cov = symmetrize(csub @ cov @ csub.T + rsub)
            try:
                s_chol = np.linalg.cholesky(s_cov)
            except np.linalg.LinAlgError:
                raise SingularCovarianceError(
                    f"innovation covariance not positive definite at sample {k}"
                ) from None
            gain = solve_spd(s_chol, cov @ csub.T)  # P C^T S^{-1}
            mean = mean + gain @ innov
            imkc = np.eye(nx) - gain @ csub
            cov = symmetrize(imkc @ cov @ imkc.T + gain @ rsub @ gain.T)
            half = np.linalg.solve(s_chol, innov)
            loglik_terms.append(-0.5 * (obs.sum() * LOG_2PI
                                        + logdet_from_chol(s_chol)
                                        + half @ half))
            innovations.append(innov)
            innovation_covs.append(s_cov)
        else:
            innovations.append(np.zeros(0))
            innovation_covs.append(np.zeros((0, 0)))
        upd_means[k] = mean
        upd_covs[k] = cov
        if k < nsamp - 1:
            mean = sys.phi @ mean + sys.gamma_u @ u[k] + sys.bias_x
            cov = symmetrize(sys.phi @ cov @ sys.phi.T + sys.q)

    return FilterResult(pred_means, pred_covs, upd_means, upd_covs,
                        innovations, innovation_covs,
                        float(math.fsum(loglik_terms)))


def rts_smoother(sys, filt):
    """Backward smoothing pass producing the exact Markov-Gaussian posterior.

    Returns a :class:`GeneralGaussMarkov` whose conditional covariances are
    the Schur complements implied by the smoothed marginals and the lag-one
    cross covariances Cov(x_k, x_{k-1} | y_{0:N}) = P_k^s G_{k-1}^T.
    """
    nsamp, nx = filt.updated_means.shape
    n = nsamp - 1
    means = filt.updated_means.copy()
    covs = filt.updated_covs.copy()
    gains = np.empty((max(n, 0), nx, nx))
    for k in range(n - 1, -1, -1):
        pred_cov = filt.predicted_covs[k + 1]
        try:
            chol = np.linalg.cholesky(pred_cov)
        except np.linalg.LinAlgError:
            raise SingularCovarianceError(
                f"predicted covariance singular at sample {k + 1}") from None
        gains[k] = solve_spd(chol, filt.updated_covs[k] @ sys.phi.T)
        means[k] = filt.updated_means[k] + gains[k] @ (
            means[k + 1] - filt.predicted_means[k + 1])
        covs[k] = symmetrize(filt.updated_covs[k] + gains[k] @ (
            covs[k + 1] - pred_cov) @ gains[k].T)

    cross = np.empty((n, nx, nx))
    cond = np.empty((nsamp, nx, nx))
    cond[0] = covs[0]
    for k in range(1, nsamp):
        cross[k - 1] = covs[k] @ gains[k - 1].T
        chol = cholesky_spd(covs[k - 1], context=f"smoothed covariance {k - 1}")
        gain = solve_spd(chol, cross[k - 1])  # cross Sigma^{-1}
        cond[k] = symmetrize(covs[k] - gain @ cross[k - 1].T)
    return GeneralGaussMarkov(means, cond, cross)


def steady_state_kf(sys, *, tol=1e-12, max_iter=10000):
    """Stationary predicted covariance and filter gain.

    Iterates the full filter covariance recursion (update then predict) to a
    fixed point; non-convergence signals an undetectable or marginally stable
    configuration.
    """
    cov = sys.q.copy()
    for _ in range(max_iter):
        s_cov = symmetrize(sys.c @ cov @ sys.c.T + sys.r)
        s_chol = cholesky_spd(s_cov, context="innovation covariance")
        gain = solve_spd(s_chol, cov @ sys.c.T)
        upd = symmetrize(cov - gain @ sys.c @ cov)
        nxt = symmetrize(sys.phi @ upd @ sys.phi.T + sys.q)
        delta = np.linalg.norm(nxt - cov) / max(np.linalg.norm(nxt), 1e-300)
        cov = nxt
        if delta <= tol:
            s_cov = symmetrize(sys.c @ cov @ sys.c.T + sys.r)
            s_chol = cholesky_spd(s_cov, context="innovation covariance")
            gain = solve_spd(s_chol, cov @ sys.c.T)
            return gain, cov
    raise NumericalError(
        f"steady-state filter covariance did not converge in {max_iter} "
        f"iterations (relative change {delta:.3e})")


def predict_one_step(sys, gain, dataset, x0=None):
    """One-step-ahead output predictions with the stationary gain.

    The state estimate is corrected only on observed channels. ``x0`` is the
    initial predicted state (the smoother mean when invoked from evaluation,
    zero otherwise).
    """
    u, y, mask = dataset.u, dataset.y, dataset.y_mask
    nsamp = y.shape[0]
    mean = np.zeros(sys.nx) if x0 is None else np.asarray(x0, dtype=float)
    predictions = np.empty((nsamp, sys.ny))
    for k in range(nsamp):
        predictions[k] = sys.c @ mean + sys.d @ u[k] + sys.bias_y
        obs = mask[k]
        corrected = mean
        if obs.any():
            corrected = mean + gain[:, obs] @ (y[k, obs] - predictions[k][obs])
        if k < nsamp - 1:
            mean = sys.phi @ corrected + sys.gamma_u @ u[k] + sys.bias_x
    return predictions
