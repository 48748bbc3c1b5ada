"""Limited-memory quasi-Newton maximization of the bound.

The decision vector is the unconstrained packing from :mod:`varsysid.packing`,
so plain L-BFGS with a strong-Wolfe line search applies directly. The
optimizer minimizes the negated objective; all reported values are the
maximized bound. Evaluation failures inside the line search (invalid
stationary processes at trial points) count as rejected steps, never crashes,
and the best accepted iterate is always returned.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .elbo import DIFFUSE, elbo_value, elbo_value_and_gradient
from .errors import NumericalError, VarsysidError
from .packing import make_layout

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_LINE_SEARCH = "line_search_failure"
STATUS_NUMERICAL = "numerical_error"


@dataclass
class OptimizerOptions:
    max_iter: int = 1000
    grad_tol: float = 1e-6
    history: int = 20
    q_family: str = "steady"
    curvature_probe: bool = True

    @classmethod
    def from_dict(cls, entries):
        known = {f for f in cls.__dataclass_fields__}
        bad = set(entries) - known
        if bad:
            raise VarsysidError(f"unknown optimizer options: {sorted(bad)}")
        return cls(**entries)


@dataclass
class IterationRecord:
    elbo: float
    grad_inf_norm: float
    step_norm: float


@dataclass
class OptimizerReport:
    iterations: int
    final_elbo: float
    grad_inf_norm: float
    status: str
    trace: list
    num_evaluations: int = 0
    flat_theta_directions: list = field(default_factory=list)

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "final_elbo": self.final_elbo,
            "grad_inf_norm": self.grad_inf_norm,
            "status": self.status,
            "num_evaluations": self.num_evaluations,
            "flat_theta_directions": list(self.flat_theta_directions),
            "trace": [[r.elbo, r.grad_inf_norm, r.step_norm]
                      for r in self.trace],
        }


@dataclass
class EstimationResult:
    theta: np.ndarray
    q: object
    breakdown: object
    report: OptimizerReport
    evaluation: object = None


def _grad_converged(fval, grad, tol):
    return np.abs(grad).max() <= tol * (1.0 + abs(fval))


class _LineSearchError(Exception):
    pass


def _cubic_step(a_lo, f_lo, g_lo, a_hi, f_hi):
    """Minimizer of the cubic through (a_lo, f_lo, g_lo) and (a_hi, f_hi).

    Falls back to bisection when the interpolant is degenerate or the step
    leaves the bracket interior.
    """
    gap = a_hi - a_lo
    if not np.isfinite(f_hi) or gap == 0.0:
        return a_lo + 0.5 * gap
    with np.errstate(all="ignore"):
        d1 = g_lo + 2.0 * ((f_hi - f_lo) / gap - g_lo)  # quadratic fallback
        quad = a_lo - 0.5 * g_lo * gap * gap / (f_hi - f_lo - g_lo * gap) \
            if f_hi - f_lo - g_lo * gap != 0 else np.nan
    step = quad
    lo, hi = (a_lo, a_hi) if a_lo < a_hi else (a_hi, a_lo)
    margin = 0.1 * (hi - lo)
    if not np.isfinite(step) or step < lo + margin or step > hi - margin:
        step = a_lo + 0.5 * gap
    return step


def _zoom(fun, x, d, phi0, dphi0, a_lo, phi_lo, dphi_lo, g_lo, a_hi, phi_hi,
          c1, c2, max_iter=60):
    for _ in range(max_iter):
        a = _cubic_step(a_lo, phi_lo, dphi_lo, a_hi, phi_hi)
        f, g = fun(x + a * d)
        dphi = float(g @ d) if np.all(np.isfinite(g)) else np.nan
        if not np.isfinite(f) or f > phi0 + c1 * a * dphi0 or f >= phi_lo:
            a_hi, phi_hi = a, f
        else:
            if abs(dphi) <= -c2 * dphi0:
                return a, f, g
            if dphi * (a_hi - a_lo) >= 0:
                a_hi, phi_hi = a_lo, phi_lo
            a_lo, phi_lo, dphi_lo, g_lo = a, f, dphi, g
        if abs(a_hi - a_lo) <= 1e-16 * max(1.0, abs(a_lo)):
            break
    # the strong-Wolfe window can be unresolvable next to a domain boundary;
    # fall back to the best sufficient-decrease point found (the curvature
    # guard on (s, y) pairs protects the quasi-Newton memory)
    if a_lo > 0 and np.isfinite(phi_lo) and phi_lo < phi0:
        return a_lo, phi_lo, g_lo
    raise _LineSearchError


def _wolfe_search(fun, x, f0, g0, d, first_step, c1=1e-4, c2=0.9,
                  max_iter=25):
    dphi0 = float(g0 @ d)
    if dphi0 >= 0:
        raise _LineSearchError
    a_prev, phi_prev, dphi_prev, g_prev = 0.0, f0, dphi0, g0
    a = first_step
    for it in range(max_iter):
        f, g = fun(x + a * d)
        finite = np.isfinite(f) and np.all(np.isfinite(g))
        dphi = float(g @ d) if finite else np.nan
        if not np.isfinite(f) or f > f0 + c1 * a * dphi0 \
                or (it > 0 and f >= phi_prev):
            return _zoom(fun, x, d, f0, dphi0, a_prev, phi_prev, dphi_prev,
                         g_prev, a, f, c1, c2)
        if abs(dphi) <= -c2 * dphi0:
            return a, f, g
        if dphi >= 0:
            return _zoom(fun, x, d, f0, dphi0, a, f, dphi, g, a_prev,
                         phi_prev, c1, c2)
        a_prev, phi_prev, dphi_prev, g_prev = a, f, dphi, g
        a = 2.0 * a
    raise _LineSearchError


def lbfgs_minimize(fun, x0, *, max_iter=1000, grad_tol=1e-6, history=20,
                   callback=None):
    """Minimize fun(x) -> (f, grad) by L-BFGS with a strong-Wolfe search.

    Terminates when the gradient infinity norm drops below
    ``grad_tol * (1 + |f|)``. Returns (x, f, grad, status, trace) with the
    best accepted iterate regardless of status.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        return x, f, g, STATUS_NUMERICAL, []
    memory = deque(maxlen=history)
    trace = []
    status = STATUS_MAX_ITER
    gamma = 1.0
    for _ in range(max_iter):
        if _grad_converged(-f, g, grad_tol):
            status = STATUS_CONVERGED
            break
        d = _two_loop(g, memory, gamma)
        if float(d @ g) >= 0:
            memory.clear()
            d = -g
        first_step = 1.0 if memory else min(1.0, 1.0 / max(
            1.0, float(np.abs(g).max())))
        try:
            alpha, f_new, g_new = _wolfe_search(fun, x, f, g, d, first_step)
        except _LineSearchError:
            # escape cascade: a steepest-descent restart clears stale
            # curvature pairs; if that fails too, a greedy coordinate step
            # along the worst gradient entry still yields a resolvable
            # decrease when the full direction's predicted decrease has
            # fallen below the evaluation noise
            try:
                memory.clear()
                gamma = 1.0
                d = -g
                first_step = min(1.0, 1.0 / max(1.0, float(np.abs(g).max())))
                alpha, f_new, g_new = _wolfe_search(fun, x, f, g, d,
                                                    first_step)
            except _LineSearchError:
                for j in np.argsort(-np.abs(g))[:5]:
                    d = np.zeros_like(g)
                    d[j] = -np.sign(g[j])
                    try:
                        alpha, f_new, g_new = _wolfe_search(fun, x, f, g, d,
                                                            1.0)
                        break
                    except _LineSearchError:
                        continue
                else:
                    status = STATUS_LINE_SEARCH
                    break
        step = alpha * d
        yvec = g_new - g
        sty = float(step @ yvec)
        if sty > 1e-10 * float(np.linalg.norm(step) * np.linalg.norm(yvec)):
            memory.append((step, yvec, sty))
            gamma = sty / float(yvec @ yvec)
        x = x + step
        f, g = f_new, g_new
        trace.append(IterationRecord(elbo=-f,
                                     grad_inf_norm=float(np.abs(g).max()),
                                     step_norm=float(np.linalg.norm(step))))
        if callback is not None:
            callback(x, f, g)
    else:
        status = STATUS_MAX_ITER
    if status == STATUS_MAX_ITER and _grad_converged(-f, g, grad_tol):
        status = STATUS_CONVERGED
    return x, f, g, status, trace


def _two_loop(grad, memory, gamma):
    q = -grad.copy()
    alphas = []
    for s, y, sty in reversed(memory):
        a = float(s @ q) / sty
        alphas.append(a)
        q -= a * y
    q *= gamma
    for (s, y, sty), a in zip(memory, reversed(alphas)):
        b = float(y @ q) / sty
        q += (a - b) * s
    return q


def _subspace_newton_polish(fun, x, f, g, sub_idx, grad_tol, max_rounds=10):
    """Damped-Newton refinement over a small coordinate block.

    The covariance/parameter blocks can carry curvature many orders above
    the rest of the problem, leaving a limited-memory method stalled with
    its residual gradient concentrated there. An explicit Hessian over just
    those coordinates (central differences of the analytic gradient) makes
    the remaining decreases resolvable. Returns the improved (x, f, g).
    """
    sub_idx = np.asarray(sub_idx, dtype=int)
    nsub = sub_idx.size
    if nsub == 0 or nsub > 64:
        return x, f, g
    for _ in range(max_rounds):
        if _grad_converged(-f, g, grad_tol):
            break
        hess = np.empty((nsub, nsub))
        for col, j in enumerate(sub_idx):
            eps = 1e-5 * (1.0 + abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += eps
            xm[j] -= eps
            _, gp = fun(xp)
            _, gm = fun(xm)
            if not (np.all(np.isfinite(gp)) and np.all(np.isfinite(gm))):
                return x, f, g
            hess[:, col] = (gp[sub_idx] - gm[sub_idx]) / (2 * eps)
        hess = 0.5 * (hess + hess.T)
        try:
            eigval, eigvec = np.linalg.eigh(hess)
        except np.linalg.LinAlgError:
            break
        floor = max(1e-8, 1e-10 * float(eigval.max()))
        eigval = np.maximum(eigval, floor)
        step = -(eigvec @ ((eigvec.T @ g[sub_idx]) / eigval))
        direction = np.zeros_like(x)
        direction[sub_idx] = step
        try:
            alpha, f_new, g_new = _wolfe_search(fun, x, f, g, direction, 1.0)
        except _LineSearchError:
            break
        x = x + alpha * direction
        f, g = f_new, g_new
    return x, f, g


def _finish_with_polish(fun, x, f, g, status, trace, sub_idx, options):
    """Interleave subspace-Newton polish with quasi-Newton restarts.

    Runs only when the line search gave out above the gradient tolerance;
    preserves the monotone trace and the best-iterate guarantee.
    """
    for _ in range(3):
        if status != STATUS_LINE_SEARCH \
                or _grad_converged(-f, g, options.grad_tol):
            break
        x2, f2, g2 = _subspace_newton_polish(fun, x, f, g, sub_idx,
                                             options.grad_tol)
        if not (f2 < f):
            break
        x, f, g = x2, f2, g2
        budget = max(200, options.max_iter - len(trace))
        x, f, g, status, more = lbfgs_minimize(
            fun, x, max_iter=budget, grad_tol=options.grad_tol,
            history=options.history)
        trace.extend(more)
    if status == STATUS_LINE_SEARCH and _grad_converged(-f, g,
                                                        options.grad_tol):
        status = STATUS_CONVERGED
    return x, f, g, status, trace


def _objective(model, dataset, prior, layout):
    size = layout.size
    counter = [0]

    def negfun(vec):
        counter[0] += 1
        try:
            theta, q = layout.unpack(vec)
            breakdown, grad = elbo_value_and_gradient(model, dataset, q,
                                                      theta, prior)
        except (NumericalError, np.linalg.LinAlgError):
            return np.inf, np.zeros(size)
        return -breakdown.total, -grad

    return negfun, counter


def maximize(model, dataset, prior=DIFFUSE, init=None, options=None):
    """Maximize the bound over (theta, q) from the flat decision vector.

    ``init`` is a full decision vector (defaults to all zeros, which decodes
    to theta = 0, mu = 0, Sigma_cond = I, Sigma_cross = 0). Returns
    (EstimationResult, OptimizerReport).
    """
    options = options or OptimizerOptions()
    layout = make_layout(options.q_family, model.dims.ntheta, model.dims.nx,
                         dataset.num_steps + 1)
    x0 = np.zeros(layout.size) if init is None else np.asarray(init, float)
    if x0.shape != (layout.size,):
        raise VarsysidError(f"initial decision vector has length {x0.size}, "
                            f"layout requires {layout.size}")
    negfun, counter = _objective(model, dataset, prior, layout)
    x, f, g, status, trace = lbfgs_minimize(
        negfun, x0, max_iter=options.max_iter, grad_tol=options.grad_tol,
        history=options.history)
    mu_end = model.dims.ntheta + (dataset.num_steps + 1) * model.dims.nx
    sub_idx = np.r_[0:model.dims.ntheta, mu_end:layout.size]
    x, f, g, status, trace = _finish_with_polish(
        negfun, x, f, g, status, trace, sub_idx, options)
    theta, q = layout.unpack(x)
    # report the gradient from an independent re-evaluation at the optimum
    f_check, g_check = negfun(x)
    grad_inf = float(np.abs(g_check).max()) if np.all(np.isfinite(g_check)) \
        else float("inf")
    report = OptimizerReport(iterations=len(trace), final_elbo=-f,
                             grad_inf_norm=grad_inf, status=status,
                             trace=trace, num_evaluations=counter[0])
    if options.curvature_probe and model.dims.ntheta and status in (
            STATUS_CONVERGED, STATUS_MAX_ITER):
        report.flat_theta_directions = _probe_flat_directions(
            negfun, x, f, model.dims.ntheta)
    breakdown = elbo_value(model, dataset, q, theta, prior)
    result = EstimationResult(theta=theta, q=q, breakdown=breakdown,
                              report=report)
    return result, report


def _probe_flat_directions(negfun, x, f, ntheta, rel_tol=1e-8):
    """Cheap diagonal curvature probe over the theta block.

    Flags parameters whose second difference of the objective is negligible,
    which signals unidentifiable directions (e.g. constant-input records).
    """
    flat = []
    for j in range(ntheta):
        eps = 1e-4 * (1.0 + abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += eps
        xm[j] -= eps
        fp, _ = negfun(xp)
        fm, _ = negfun(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            continue
        curv = (fp - 2 * f + fm) / eps ** 2
        if abs(curv) <= rel_tol * (1.0 + abs(f)):
            flat.append(j)
    return flat


def smooth(model, dataset, theta_fixed, prior=DIFFUSE, options=None,
           init=None):
    """Optimize the assumed density only, with the parameters held fixed.

    Returns (q, OptimizerReport).
    """
    options = options or OptimizerOptions()
    theta_fixed = np.asarray(theta_fixed, dtype=float)
    if theta_fixed.shape != (model.dims.ntheta,):
        raise VarsysidError(f"theta has length {theta_fixed.size}, model "
                            f"expects {model.dims.ntheta}")
    layout = make_layout(options.q_family, model.dims.ntheta, model.dims.nx,
                         dataset.num_steps + 1)
    template = np.zeros(layout.size) if init is None \
        else np.asarray(init, float).copy()
    template[:model.dims.ntheta] = theta_fixed
    qmask = layout.q_block_mask()
    negfull, counter = _objective(model, dataset, prior, layout)

    def negfun(vec_q):
        full = template.copy()
        full[qmask] = vec_q
        f, grad = negfull(full)
        return f, grad[qmask]

    x, f, g, status, trace = lbfgs_minimize(
        negfun, template[qmask], max_iter=options.max_iter,
        grad_tol=options.grad_tol, history=options.history)
    mu_len = (dataset.num_steps + 1) * model.dims.nx
    sub_idx = np.arange(mu_len, int(qmask.sum()))
    x, f, g, status, trace = _finish_with_polish(
        negfun, x, f, g, status, trace, sub_idx, options)
    full = template.copy()
    full[qmask] = x
    _, q = layout.unpack(full)
    f_check, g_check = negfun(x)
    grad_inf = float(np.abs(g_check).max()) if np.all(np.isfinite(g_check)) \
        else float("inf")
    report = OptimizerReport(iterations=len(trace), final_elbo=-f,
                             grad_inf_norm=grad_inf, status=status,
                             trace=trace, num_evaluations=counter[0])
    return q, report
