"""Sigma-point evidence lower bound: value, breakdown and exact gradient.

The bound over a Markov-Gaussian assumed density decomposes into an initial
state term, per-transition and per-measurement Gaussian expectations, and the
density's entropy. Expectations are taken with equal-weight sigma points over
the single-sample and consecutive-pair marginals, which is exact for linear
models. Gradients are reverse-mode throughout; the stationary marginal fixed
point is differentiated implicitly via its linear sensitivity equation.

Two engines produce identical results: a generic one (any model, either
assumed-density family, literal per-point evaluation) and a fast path for
masked-LTI models with the steady-state family, whose inner reductions run in
``varsysid._kernels``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NonFiniteError, SingularCovarianceError, VarsysidError
from .gauss_markov import SteadyStateGaussMarkov
from .linalg import (LOG_2PI, chol_backward, cholesky_spd, logchol_grad,
                     logdet_from_chol, product_backward_spd, solve_lower,
                     solve_spd, spd_inverse)
from .model import LtiModel, process_cov_chol
from .packing import layout_for
from .sigma_points import JITTER

LOG_2PI_E = LOG_2PI + 1.0


@dataclass(frozen=True)
class InitialStatePrior:
    """Prior on the initial state: diffuse (contributes 0) or Gaussian."""

    kind: str
    mean: np.ndarray = None
    cov: np.ndarray = None

    @classmethod
    def diffuse(cls):
        return cls(kind="diffuse")

    @classmethod
    def gaussian(cls, mean, cov):
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        cholesky_spd(cov, context="initial-state prior covariance")
        return cls(kind="gaussian", mean=mean, cov=cov)


DIFFUSE = InitialStatePrior.diffuse()


@dataclass(frozen=True)
class ElboBreakdown:
    """Objective value split into its four constituents (total = their sum)."""

    prior_term: float
    transition_term: float
    measurement_term: float
    entropy_term: float
    total: float

    @classmethod
    def assemble(cls, prior_term, transition_term, measurement_term,
                 entropy_term):
        total = prior_term + transition_term + measurement_term + entropy_term
        return cls(prior_term, transition_term, measurement_term,
                   entropy_term, total)

    def as_dict(self):
        return {
            "prior_term": self.prior_term,
            "transition_term": self.transition_term,
            "measurement_term": self.measurement_term,
            "entropy_term": self.entropy_term,
            "total": self.total,
        }


@dataclass
class _GradParts:
    """Structured gradient; flattened by the decision-vector layout."""

    theta: np.ndarray
    mu: np.ndarray
    cond_logchol: np.ndarray
    cross: np.ndarray


def elbo_value(model, dataset, q, theta, prior=DIFFUSE, engine="auto"):
    """Evaluate the bound; returns an :class:`ElboBreakdown`."""
    breakdown, _ = _evaluate(model, dataset, q, theta, prior,
                             want_grad=False, engine=engine)
    return breakdown


def elbo_gradient(model, dataset, q, theta, prior=DIFFUSE, engine="auto"):
    """Gradient of the total with respect to the packed decision vector."""
    _, grad = elbo_value_and_gradient(model, dataset, q, theta, prior, engine)
    return grad


def elbo_value_and_gradient(model, dataset, q, theta, prior=DIFFUSE,
                            engine="auto"):
    """Breakdown plus the flat gradient (shares all intermediate work)."""
    breakdown, parts = _evaluate(model, dataset, q, theta, prior,
                                 want_grad=True, engine=engine)
    layout = layout_for(q, np.asarray(theta).size)
    grad = layout.pack_grad(parts.theta, parts.mu, parts.cond_logchol,
                            parts.cross)
    return breakdown, grad


def _evaluate(model, dataset, q, theta, prior, want_grad, engine):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.dims.ntheta,):
        raise VarsysidError(f"theta has shape {theta.shape}, model expects "
                            f"({model.dims.ntheta},)")
    if q.mu.shape != (dataset.num_steps + 1, model.dims.nx):
        raise VarsysidError(
            f"assumed-density means {q.mu.shape} do not match the record "
            f"({dataset.num_steps + 1} samples, {model.dims.nx} states)")
    fast_ok = isinstance(model, LtiModel) and isinstance(q, SteadyStateGaussMarkov)
    if engine == "fast" and not fast_ok:
        raise VarsysidError("fast engine requires an LTI model and a "
                            "steady-state assumed density")
    use_fast = fast_ok if engine == "auto" else (engine == "fast")
    if use_fast:
        return _evaluate_lti_steady(model, dataset, q, theta, prior, want_grad)
    return _evaluate_generic(model, dataset, q, theta, prior, want_grad)


# ---------------------------------------------------------------------------
# shared pieces


def _steady_factors(q):
    marg = q.stationary()
    ls = cholesky_spd(marg, jitter=JITTER, context="stationary marginal")
    pair = np.block([[marg, q.sigma_cross.T], [q.sigma_cross, marg]])
    lp = cholesky_spd(pair, jitter=JITTER, context="pair covariance")
    return marg, ls, lp


def _batched_cholesky(covs, context):
    try:
        return np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        return np.stack([cholesky_spd(covs[k], jitter=JITTER,
                                      context=f"{context} at step {k}")
                         for k in range(covs.shape[0])])


def _chol_backward_batched(chol, chol_bar):
    lbar = np.tril(chol_bar)
    work = np.tril(np.swapaxes(chol, -1, -2) @ lbar)
    d = chol.shape[-1]
    ii = np.arange(d)
    work[..., ii, ii] *= 0.5
    lt = np.swapaxes(chol, -1, -2)
    t1 = np.linalg.solve(lt, work)
    bt = np.linalg.solve(lt, np.swapaxes(t1, -1, -2))
    b = np.swapaxes(bt, -1, -2)
    return 0.5 * (b + np.swapaxes(b, -1, -2))


def _logchol_grad_batched(chol, chol_bar):
    d = chol.shape[-1]
    work = np.tril(chol_bar).copy()
    ii = np.arange(d)
    work[..., ii, ii] *= chol[..., ii, ii]
    rows, cols = np.tril_indices(d)
    return work[..., rows, cols]


def _fsum(values):
    return float(math.fsum(np.asarray(values, dtype=float).ravel().tolist()))


def _logdet_ld(chol):
    """log det(L L^T) accumulated in extended precision.

    Shared per-step constants are multiplied by the record length when the
    bound is assembled, so their last-bit rounding would otherwise be
    amplified N-fold into objective roughness that stalls line searches.
    """
    diag = np.diagonal(chol, axis1=-2, axis2=-1).astype(np.longdouble)
    return 2.0 * np.sum(np.log(diag))


def _check_finite(per_step, what):
    bad = ~np.isfinite(per_step)
    if bad.any():
        raise NonFiniteError(f"{what} non-finite", index=int(np.argmax(bad)))


def _steady_cov_backward(q, marg, ls, lp, ls_bar, lp_bar, n):
    """Chain factor/entropy gradients back to (log-chol Sigma_cond, Sigma_cross).

    Returns full-entry gradients packed for the steady-state layout. The
    stationary fixed point S = C + X S^{-1} X^T is differentiated implicitly:
    the adjoint w solves w + M^T w M = S_bar with M = X S^{-1}.
    """
    nx = q.nx
    sbar = chol_backward(ls, ls_bar)
    pbar = chol_backward(lp, lp_bar)
    sbar = sbar + pbar[:nx, :nx] + pbar[nx:, nx:]
    xbar = pbar[:nx, nx:].T + pbar[nx:, :nx]
    # entropy: d(1/2 log det S)/dS
    sbar = sbar + 0.5 * spd_inverse(ls)
    gain = solve_spd(ls, q.sigma_cross)  # M = X S^{-1}
    kron = np.kron(gain.T, gain.T)
    w = np.linalg.solve(np.eye(nx * nx) + kron, sbar.ravel()).reshape(nx, nx)
    lc = cholesky_spd(q.sigma_cond, context="Sigma_cond")
    cond_bar = w + 0.5 * n * spd_inverse(lc)
    cross_bar = xbar + (w + w.T) @ gain
    lc_bar = product_backward_spd(lc, cond_bar)
    return logchol_grad(lc, lc_bar), cross_bar


def _gaussian_prior_chol(prior):
    return cholesky_spd(prior.cov, context="initial-state prior covariance")


# ---------------------------------------------------------------------------
# generic engine: any model, either q family, literal per-point evaluation


def _evaluate_generic(model, dataset, q, theta, prior, want_grad):
    nx, ny, nt = model.dims.nx, model.dims.ny, model.dims.ntheta
    period = dataset.period
    nsamp = dataset.num_steps + 1
    n = nsamp - 1
    mu = q.mu
    steady = isinstance(q, SteadyStateGaussMarkov)
    w1 = 1.0 / (2 * nx)
    w2 = 1.0 / (4 * nx)
    sq1 = math.sqrt(nx)
    sq2 = math.sqrt(2 * nx)

    # -- sigma points over single-sample and pair marginals --
    if steady:
        marg, ls, lp = _steady_factors(q)
        off1 = sq1 * ls.T
        d1 = np.concatenate([off1, -off1], axis=0)        # (2nx, nx)
        xs = mu[:, None, :] + d1[None, :, :]
        off2 = sq2 * lp.T
        d2 = np.concatenate([off2, -off2], axis=0)        # (4nx, 2nx)
    else:
        margs = q.marginals()
        ls_all = _batched_cholesky(margs, "marginal covariance")
        off1 = sq1 * np.swapaxes(ls_all, -1, -2)
        d1 = np.concatenate([off1, -off1], axis=1)        # (nsamp, 2nx, nx)
        xs = mu[:, None, :] + d1
        cross = q.sigma_cross
        pair = np.empty((n, 2 * nx, 2 * nx))
        pair[:, :nx, :nx] = margs[:-1]
        pair[:, :nx, nx:] = np.swapaxes(cross, -1, -2)
        pair[:, nx:, :nx] = cross
        pair[:, nx:, nx:] = margs[1:]
        lp_all = _batched_cholesky(pair, "pair covariance")
        off2 = sq2 * np.swapaxes(lp_all, -1, -2)
        d2 = np.concatenate([off2, -off2], axis=1)        # (n, 4nx, 2nx)
    pair_means = np.concatenate([mu[:-1], mu[1:]], axis=1)
    zs = pair_means[:, None, :] + (d2[None, :, :] if steady else d2)

    mu_bar = np.zeros_like(mu)
    theta_bar = np.zeros(nt)
    if steady:
        ls_bar = np.zeros((nx, nx))
        lp_bar = np.zeros((2 * nx, 2 * nx))
    else:
        ls_bar_all = np.zeros((nsamp, nx, nx))
        lp_bar_all = np.zeros((n, 2 * nx, 2 * nx))

    # -- transition term --
    transition_term = 0.0
    if n > 0:
        a_pts = zs[..., :nx]
        b_pts = zs[..., nx:]
        u_prev = dataset.u[:-1][:, None, :]
        fmean = a_pts + period * model.drift(a_pts, u_prev, theta)
        resid = b_pts - fmean
        lq = process_cov_chol(model, period, theta)
        halfq = solve_lower(lq, resid)
        quad = np.sum(halfq * halfq, axis=-1)             # (n, 4nx)
        per_k = -0.5 * w2 * quad.sum(axis=1)
        shared = -0.5 * (nx * np.longdouble(LOG_2PI) + _logdet_ld(lq))
        _check_finite(per_k, "transition log-density")
        if not np.isfinite(float(shared)):
            raise NonFiniteError("transition log-density non-finite")
        transition_term = float(n * shared + np.longdouble(_fsum(per_k)))
        if want_grad:
            p = solve_spd(lq, resid)
            jx = model.drift_jac_x(a_pts, u_prev, theta)
            ga = p + period * np.einsum("kpij,kpi->kpj", jx, p)
            gb = -p
            mu_bar[:-1] += w2 * ga.sum(axis=1)
            mu_bar[1:] += w2 * gb.sum(axis=1)
            gz = np.concatenate([ga, gb], axis=-1)        # (n, 4nx, 2nx)
            diff = gz[:, :2 * nx, :] - gz[:, 2 * nx:, :]
            if steady:
                lp_bar += w2 * sq2 * diff.sum(axis=0).T
            else:
                lp_bar_all += w2 * sq2 * np.swapaxes(diff, -1, -2)
            jt = model.drift_jac_theta(a_pts, u_prev, theta)
            theta_bar += period * w2 * np.einsum("kpit,kpi->t", jt, p)
            qbar = -0.5 * n * spd_inverse(lq) \
                + 0.5 * w2 * np.einsum("kpi,kpj->ij", p, p)
            gmat = np.atleast_2d(model.diffusion(theta))
            gjac = model.diffusion_jac_theta(theta)
            theta_bar += np.einsum(
                "iw,iwt->t", period * (qbar + qbar.T) @ gmat, gjac)

    # -- measurement term --
    meas_vals = np.zeros(nsamp)
    meas_shared = np.longdouble(0.0)
    rbar = np.zeros((ny, ny)) if want_grad else None
    rfull = np.asarray(model.meas_cov(theta), dtype=float)
    any_obs = False
    for obs, idx in dataset.mask_groups():
        any_obs = True
        nobs = int(obs.sum())
        xg = xs[idx]
        ug = dataset.u[idx][:, None, :]
        hval = model.output(xg, ug, theta)[..., obs]
        residm = dataset.y[idx][:, None, obs] - hval
        try:
            lr = np.linalg.cholesky(rfull[np.ix_(obs, obs)])
        except np.linalg.LinAlgError:
            raise SingularCovarianceError(
                "measurement covariance R is singular") from None
        halfr = solve_lower(lr, residm)
        quadm = np.sum(halfr * halfr, axis=-1)            # (m, 2nx)
        meas_vals[idx] = -0.5 * w1 * quadm.sum(axis=1)
        meas_shared += len(idx) * (
            -0.5 * (nobs * np.longdouble(LOG_2PI) + _logdet_ld(lr)))
        if want_grad:
            pm = solve_spd(lr, residm)
            jxh = model.output_jac_x(xg, ug, theta)[..., obs, :]
            gx = np.einsum("kpoj,kpo->kpj", jxh, pm)
            mu_bar[idx] += w1 * gx.sum(axis=1)
            diffm = gx[:, :nx, :] - gx[:, nx:, :]         # (m, nx, nx)
            if steady:
                ls_bar += w1 * sq1 * diffm.sum(axis=0).T
            else:
                ls_bar_all[idx] += w1 * sq1 * np.swapaxes(diffm, -1, -2)
            jth = model.output_jac_theta(xg, ug, theta)[..., obs, :]
            theta_bar += w1 * np.einsum("kpot,kpo->t", jth, pm)
            rbar[np.ix_(obs, obs)] += -0.5 * len(idx) * spd_inverse(lr) \
                + 0.5 * w1 * np.einsum("kpo,kpq->oq", pm, pm)
    _check_finite(meas_vals, "measurement log-density")
    if not np.isfinite(float(meas_shared)):
        raise NonFiniteError("measurement log-density non-finite")
    measurement_term = float(meas_shared + np.longdouble(_fsum(meas_vals)))
    if want_grad and any_obs:
        rjac = model.meas_cov_jac_theta(theta)
        theta_bar += np.einsum("ij,ijt->t", rbar, rjac)

    # -- initial-state prior term --
    prior_term = 0.0
    if prior.kind == "gaussian":
        lp0 = _gaussian_prior_chol(prior)
        resid0 = xs[0] - prior.mean
        vals0 = -0.5 * (nx * LOG_2PI + logdet_from_chol(lp0)
                        + np.sum(solve_lower(lp0, resid0) ** 2, axis=-1))
        _check_finite(vals0, "initial-state prior log-density")
        prior_term = w1 * _fsum(vals0)
        if want_grad:
            g0 = -solve_spd(lp0, resid0)
            mu_bar[0] += w1 * g0.sum(axis=0)
            diff0 = g0[:nx] - g0[nx:]
            if steady:
                ls_bar += w1 * sq1 * diff0.T
            else:
                ls_bar_all[0] += w1 * sq1 * diff0.T
    elif prior.kind != "diffuse":
        raise VarsysidError(f"unknown prior kind {prior.kind!r}")

    # -- entropy term and covariance-parameter backward pass --
    if steady:
        lc = cholesky_spd(q.sigma_cond, context="Sigma_cond")
        entropy_term = float(0.5 * _logdet_ld(ls)
                             + 0.5 * n * _logdet_ld(lc)
                             + 0.5 * nsamp * nx * np.longdouble(LOG_2PI_E))
        parts = None
        if want_grad:
            cond_vec_bar, cross_bar = _steady_cov_backward(
                q, marg, ls, lp, ls_bar, lp_bar, n)
            parts = _GradParts(theta_bar, mu_bar, cond_vec_bar, cross_bar)
    else:
        lc_all = _batched_cholesky(q.sigma_cond, "Sigma_cond")
        entropy_term = float(0.5 * _fsum(logdet_from_chol(lc_all))
                             + 0.5 * nsamp * nx * LOG_2PI_E)
        parts = None
        if want_grad:
            sbar_all = _chol_backward_batched(ls_all, ls_bar_all)
            pbar_all = _chol_backward_batched(lp_all, lp_bar_all)
            cross_bar_all = np.zeros((n, nx, nx))
            if n > 0:
                sbar_all[:-1] += pbar_all[:, :nx, :nx]
                sbar_all[1:] += pbar_all[:, nx:, nx:]
                cross_bar_all += np.swapaxes(pbar_all[:, :nx, nx:], -1, -2)
                cross_bar_all += pbar_all[:, nx:, :nx]
            cond_bar_all, cross_rec = _kernels.marg_backward(
                q.marginals(), q.sigma_cross, sbar_all)
            cross_bar_all += cross_rec
            # entropy acts on the conditional covariances directly
            inv_all = np.linalg.solve(q.sigma_cond, np.broadcast_to(
                np.eye(nx), (nsamp, nx, nx)))
            cond_bar_all = cond_bar_all + 0.5 * inv_all
            lcb = np.tril((cond_bar_all
                           + np.swapaxes(cond_bar_all, -1, -2)) @ lc_all)
            cond_vec_bar = _logchol_grad_batched(lc_all, lcb)
            parts = _GradParts(theta_bar, mu_bar, cond_vec_bar, cross_bar_all)

    breakdown = ElboBreakdown.assemble(prior_term, transition_term,
                                       measurement_term, entropy_term)
    return breakdown, parts


# ---------------------------------------------------------------------------
# fast engine: masked-LTI model + steady-state family


def _evaluate_lti_steady(model, dataset, q, theta, prior, want_grad):
    nx, ny, nt = model.dims.nx, model.dims.ny, model.dims.ntheta
    period = dataset.period
    nsamp = dataset.num_steps + 1
    n = nsamp - 1
    mu = q.mu
    mats = model.matrices(theta)
    phi = np.eye(nx) + period * mats["a"]
    marg, ls, lp = _steady_factors(q)
    lq = process_cov_chol(model, period, theta)
    rfull = np.asarray(model.meas_cov(theta), dtype=float)

    mu_bar = np.zeros_like(mu)
    theta_bar = np.zeros(nt)
    ls_bar = np.zeros((nx, nx))
    lp_bar = np.zeros((2 * nx, 2 * nx))
    phi_bar = np.zeros((nx, nx))
    gam_bar = np.zeros((nx, model.dims.nu))
    cx_bar = np.zeros(nx)
    cbar = np.zeros((ny, nx))
    dbar = np.zeros((ny, model.dims.nu))
    bybar = np.zeros(ny)
    rbar = np.zeros((ny, ny))
    qbar = np.zeros((nx, nx))

    # -- transition term (pair sigma points collapse over +- symmetry) --
    transition_term = 0.0
    if n > 0:
        u_prev = dataset.u[:-1]
        u1 = u_prev @ (period * mats["b"]).T + period * mats["bias_state"]
        r0 = mu[1:] - mu[:-1] @ phi.T - u1
        dtil = lp[nx:, :] - phi @ lp[:nx, :]              # columns d_i
        p0, quad0_sum, gram0 = _kernels.solve_quad_gram(lq, r0)
        qtil_rows, alpha_sum, gram_d = _kernels.solve_quad_gram(lq, dtil.T)
        qtil = qtil_rows.T                                # columns Q^{-1} d_i
        quad0 = np.einsum("ki,ki->k", r0, p0)
        # the k-independent part is accumulated in extended precision
        shared = -0.5 * (nx * np.longdouble(LOG_2PI) + _logdet_ld(lq)
                         + np.longdouble(alpha_sum))
        _check_finite(quad0, "transition log-density")
        if not np.isfinite(float(shared)):
            raise NonFiniteError("transition log-density non-finite")
        transition_term = float(n * shared
                                + np.longdouble(_fsum(-0.5 * quad0)))
        if want_grad:
            mu_bar[1:] -= p0
            mu_bar[:-1] += p0 @ phi
            phi_bar += np.einsum("ki,kj->ij", p0, mu[:-1]) \
                + n * (qtil @ lp[:nx, :].T)
            gam_bar += np.einsum("ki,kj->ij", p0, u_prev)
            cx_bar += p0.sum(axis=0)
            lp_bar[:nx, :] += n * phi.T @ qtil
            lp_bar[nx:, :] -= n * qtil
            qbar += -0.5 * n * spd_inverse(lq) + 0.5 * gram0 + 0.5 * n * gram_d

    # -- measurement term (single sigma points, per observation pattern) --
    meas_vals = np.zeros(nsamp)
    meas_shared = np.longdouble(0.0)
    for obs, idx in dataset.mask_groups():
        nobs = int(obs.sum())
        co = mats["c"][obs]
        do = mats["d"][obs]
        byo = mats["bias_output"][obs]
        e0 = dataset.y[idx][:, obs] - mu[idx] @ co.T \
            - dataset.u[idx] @ do.T - byo
        try:
            lr = np.linalg.cholesky(rfull[np.ix_(obs, obs)])
        except np.linalg.LinAlgError:
            raise SingularCovarianceError(
                "measurement covariance R is singular") from None
        f0, equad_sum, gram_e = _kernels.solve_quad_gram(lr, e0)
        mtil = co @ ls                                    # columns C L e_i
        gtil_rows, beta_sum, gram_g = _kernels.solve_quad_gram(lr, mtil.T)
        gtil = gtil_rows.T                                # columns R^{-1} m_i
        equad = np.einsum("ko,ko->k", e0, f0)
        meas_vals[idx] = -0.5 * equad
        meas_shared += len(idx) * (
            -0.5 * (nobs * np.longdouble(LOG_2PI) + _logdet_ld(lr)
                    + np.longdouble(beta_sum)))
        if want_grad:
            m = len(idx)
            mu_bar[idx] += f0 @ co
            ls_bar -= m * co.T @ gtil
            cbar[obs] += np.einsum("ko,kj->oj", f0, mu[idx]) \
                - m * gtil @ ls.T
            dbar[obs] += np.einsum("ko,kj->oj", f0, dataset.u[idx])
            bybar[obs] += f0.sum(axis=0)
            rbar[np.ix_(obs, obs)] += -0.5 * m * spd_inverse(lr) \
                + 0.5 * gram_e + 0.5 * m * gram_g
    _check_finite(meas_vals, "measurement log-density")
    if not np.isfinite(float(meas_shared)):
        raise NonFiniteError("measurement log-density non-finite")
    measurement_term = float(meas_shared + np.longdouble(_fsum(meas_vals)))

    # -- initial-state prior term --
    prior_term = 0.0
    if prior.kind == "gaussian":
        lp0 = _gaussian_prior_chol(prior)
        e0p = mu[0] - prior.mean
        f0p = solve_spd(lp0, e0p)
        gp_rows, betap_sum, _ = _kernels.solve_quad_gram(lp0, ls.T)
        prior_term = float(-0.5 * (nx * LOG_2PI + logdet_from_chol(lp0)
                                   + betap_sum) - 0.5 * (e0p @ f0p))
        if want_grad:
            mu_bar[0] -= f0p
            ls_bar -= gp_rows.T
    elif prior.kind != "diffuse":
        raise VarsysidError(f"unknown prior kind {prior.kind!r}")

    # -- entropy --
    lc = cholesky_spd(q.sigma_cond, context="Sigma_cond")
    entropy_term = float(0.5 * _logdet_ld(ls)
                         + 0.5 * n * _logdet_ld(lc)
                         + 0.5 * nsamp * nx * np.longdouble(LOG_2PI_E))

    parts = None
    if want_grad:
        # model-structure chain: Phi = I + T A, Gamma = T B, bias = T bias_x
        model.blocks["a"].scatter_grad(period * phi_bar, theta_bar)
        model.blocks["b"].scatter_grad(period * gam_bar, theta_bar)
        model.blocks["bias_state"].scatter_grad(period * cx_bar, theta_bar)
        model.blocks["c"].scatter_grad(cbar, theta_bar)
        model.blocks["d"].scatter_grad(dbar, theta_bar)
        model.blocks["bias_output"].scatter_grad(bybar, theta_bar)
        # Q = T diag(exp(2 g)) and R = diag(exp(2 r))
        gdiag = np.exp(model.blocks["log_diffusion"].build(theta))
        model.blocks["log_diffusion"].scatter_grad(
            2.0 * period * np.diag(qbar) * gdiag ** 2, theta_bar)
        model.blocks["log_meas_std"].scatter_grad(
            2.0 * np.diag(rbar) * np.diag(rfull), theta_bar)
        cond_vec_bar, cross_bar = _steady_cov_backward(
            q, marg, ls, lp, ls_bar, lp_bar, n)
        parts = _GradParts(theta_bar, mu_bar, cond_vec_bar, cross_bar)

    breakdown = ElboBreakdown.assemble(prior_term, transition_term,
                                       measurement_term, entropy_term)
    return breakdown, parts
