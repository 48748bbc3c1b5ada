"""Parameterized continuous-time stochastic models and their discretization.

A model is the quadruple (drift f, diffusion G, output h, measurement
covariance R) of a continuous-time system

    dx = f(x, u, theta) dt + G(theta) dW,      y_k = h(x_k, u_k, theta) + v_k,

sampled with period T. The Euler-Maruyama scheme turns the SDE into Gaussian
state transitions with mean x + T f and covariance Q = T G G^T.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFiniteError, SingularCovarianceError
from .linalg import exact_symmetric, mvn_logpdf_chol


@dataclass(frozen=True)
class ModelDims:
    """State, input, output and parameter counts."""

    nx: int
    nu: int
    ny: int
    ntheta: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.ntheta < 0 or self.nu < 0:
            raise ConfigError(f"invalid model dimensions {self}")


class Model:
    """Abstract interface of a parameterized continuous-time model.

    Subclasses must be vectorized: ``x`` and ``u`` may carry arbitrary
    leading batch dimensions (broadcast against each other). The Jacobian
    methods default to central finite differences; override them with
    analytic expressions when gradient accuracy matters.
    """

    dims: ModelDims

    def drift(self, x, u, theta):
        raise NotImplementedError

    def diffusion(self, theta):
        raise NotImplementedError

    def output(self, x, u, theta):
        raise NotImplementedError

    def meas_cov(self, theta):
        raise NotImplementedError

    # -- Jacobians (finite-difference defaults) --

    def drift_jac_x(self, x, u, theta):
        return _fd_jac_wrt_x(self.drift, x, u, theta, self.dims.nx)

    def drift_jac_theta(self, x, u, theta):
        return _fd_jac_wrt_theta(self.drift, x, u, theta, self.dims.nx)

    def output_jac_x(self, x, u, theta):
        return _fd_jac_wrt_x(self.output, x, u, theta, self.dims.ny)

    def output_jac_theta(self, x, u, theta):
        return _fd_jac_wrt_theta(self.output, x, u, theta, self.dims.ny)

    def diffusion_jac_theta(self, theta):
        return _fd_jac_matrix(self.diffusion, theta)

    def meas_cov_jac_theta(self, theta):
        return _fd_jac_matrix(self.meas_cov, theta)


def _fd_step(value):
    return 1e-6 * (1.0 + np.abs(value))


def _fd_jac_wrt_x(fn, x, u, theta, nout):
    x = np.asarray(x, dtype=float)
    nx = x.shape[-1]
    jac = np.empty(x.shape[:-1] + (nout, nx))
    for j in range(nx):
        step = _fd_step(x[..., j])
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += step
        xm[..., j] -= step
        jac[..., :, j] = (fn(xp, u, theta) - fn(xm, u, theta)) / (2 * step[..., None])
    return jac


def _fd_jac_wrt_theta(fn, x, u, theta, nout):
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    jac = np.empty(x.shape[:-1] + (nout, theta.size))
    for j in range(theta.size):
        step = _fd_step(theta[j])
        tp = theta.copy()
        tm = theta.copy()
        tp[j] += step
        tm[j] -= step
        jac[..., :, j] = (fn(x, u, tp) - fn(x, u, tm)) / (2 * step)
    return jac


def _fd_jac_matrix(fn, theta):
    theta = np.asarray(theta, dtype=float)
    base = np.asarray(fn(theta))
    jac = np.empty(base.shape + (theta.size,))
    for j in range(theta.size):
        step = _fd_step(theta[j])
        tp = theta.copy()
        tm = theta.copy()
        tp[j] += step
        tm[j] -= step
        jac[..., j] = (fn(tp) - fn(tm)) / (2 * step)
    return jac


class _MaskedArray:
    """Array whose entries are fixed constants or indices into theta."""

    def __init__(self, spec, shape, param_index, what):
        spec = np.empty(shape, dtype=object) if spec is None else np.asarray(
            spec, dtype=object)
        if spec.shape != shape:
            raise ConfigError(f"{what}: expected shape {shape}, got {spec.shape}")
        self.values = np.zeros(shape)
        self.index = np.full(shape, -1, dtype=int)
        for pos in np.ndindex(shape):
            entry = spec[pos]
            if entry is None:
                continue
            if isinstance(entry, str):
                if entry not in param_index:
                    raise ConfigError(f"{what}: unknown parameter {entry!r}")
                self.index[pos] = param_index[entry]
            else:
                self.values[pos] = float(entry)
        self._free = self.index >= 0

    def build(self, theta):
        out = self.values.copy()
        out[self._free] = theta[self.index[self._free]]
        return out

    def extract_into(self, built, theta):
        theta[self.index[self._free]] = np.asarray(built)[self._free]

    def scatter_grad(self, bar, theta_bar):
        """Accumulate a full-entry gradient of the built array into theta."""
        np.add.at(theta_bar, self.index[self._free], np.asarray(bar)[self._free])

    @property
    def used_params(self):
        return set(self.index[self._free].tolist())


class LtiModel(Model):
    """Masked linear time-invariant model family.

    Structure::

        f(x, u, theta) = A x + B u + bias_state
        h(x, u, theta) = C x + D u + bias_output
        G(theta) = diag(exp(log_diffusion))
        R(theta) = diag(exp(2 log_meas_std))

    Every matrix/bias entry is either a fixed number or the name of a free
    parameter (an index into theta). Diffusion and measurement-noise entries
    are log-standard deviations, so theta is unconstrained and theta = 0
    decodes to unit noise covariances.

    Parameters
    ----------
    params : sequence of str
        Free parameter names; their order defines the theta layout.
    a, b, c, d, bias_state, bias_output, log_diffusion, log_meas_std :
        Nested lists of numbers and/or parameter names. ``None`` means all
        zeros (all fixed). ``log_diffusion`` defaults to zeros, i.e. G = I.
    """

    def __init__(self, *, params, nx, nu, ny, a=None, b=None, c=None, d=None,
                 bias_state=None, bias_output=None, log_diffusion=None,
                 log_meas_std=None, state_names=None):
        params = list(params)
        if len(set(params)) != len(params):
            raise ConfigError("duplicate parameter names")
        index = {name: k for k, name in enumerate(params)}
        self.params = params
        self.dims = ModelDims(nx=nx, nu=nu, ny=ny, ntheta=len(params))
        self.state_names = (list(state_names) if state_names is not None
                            else [f"x{i + 1}" for i in range(nx)])
        self.blocks = {
            "a": _MaskedArray(a, (nx, nx), index, "a"),
            "b": _MaskedArray(b, (nx, nu), index, "b"),
            "c": _MaskedArray(c, (ny, nx), index, "c"),
            "d": _MaskedArray(d, (ny, nu), index, "d"),
            "bias_state": _MaskedArray(bias_state, (nx,), index, "bias_state"),
            "bias_output": _MaskedArray(bias_output, (ny,), index, "bias_output"),
            "log_diffusion": _MaskedArray(log_diffusion, (nx,), index,
                                          "log_diffusion"),
            "log_meas_std": _MaskedArray(log_meas_std, (ny,), index,
                                         "log_meas_std"),
        }
        used = set()
        for block in self.blocks.values():
            used |= block.used_params
        unused = [name for name in params if index[name] not in used]
        if unused:
            raise ConfigError(f"parameters never referenced by any mask: {unused}")

    # -- construction helpers --

    def matrices(self, theta):
        theta = np.asarray(theta, dtype=float)
        blk = self.blocks
        return {name: blk[name].build(theta) for name in blk}

    def extract_theta(self, built):
        """Recover theta from built matrices (mask round trip)."""
        theta = np.zeros(self.dims.ntheta)
        for name, block in self.blocks.items():
            if name in built:
                block.extract_into(built[name], theta)
        return theta

    # -- Model interface --

    def drift(self, x, u, theta):
        m = self.matrices(theta)
        out = np.asarray(x) @ m["a"].T + m["bias_state"]
        if self.dims.nu:
            out = out + np.asarray(u) @ m["b"].T
        return out

    def output(self, x, u, theta):
        m = self.matrices(theta)
        out = np.asarray(x) @ m["c"].T + m["bias_output"]
        if self.dims.nu:
            out = out + np.asarray(u) @ m["d"].T
        return out

    def diffusion(self, theta):
        m = self.blocks["log_diffusion"].build(np.asarray(theta, dtype=float))
        return np.diag(np.exp(m))

    def meas_cov(self, theta):
        m = self.blocks["log_meas_std"].build(np.asarray(theta, dtype=float))
        return np.diag(np.exp(2.0 * m))

    # -- analytic Jacobians --

    def drift_jac_x(self, x, u, theta):
        a = self.blocks["a"].build(np.asarray(theta, dtype=float))
        return np.broadcast_to(a, np.shape(x)[:-1] + a.shape)

    def output_jac_x(self, x, u, theta):
        c = self.blocks["c"].build(np.asarray(theta, dtype=float))
        return np.broadcast_to(c, np.shape(x)[:-1] + c.shape)

    def drift_jac_theta(self, x, u, theta):
        return self._affine_jac_theta(x, u, "a", "b", "bias_state", self.dims.nx)

    def output_jac_theta(self, x, u, theta):
        return self._affine_jac_theta(x, u, "c", "d", "bias_output", self.dims.ny)

    def _affine_jac_theta(self, x, u, mat, inmat, bias, nout):
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        jac = np.zeros(batch + (nout, self.dims.ntheta))
        blk = self.blocks[mat]
        for row, col in zip(*np.nonzero(blk.index >= 0)):
            jac[..., row, blk.index[row, col]] += x[..., col]
        if self.dims.nu:
            u = np.broadcast_to(np.asarray(u, dtype=float), batch + (self.dims.nu,))
            blk = self.blocks[inmat]
            for row, col in zip(*np.nonzero(blk.index >= 0)):
                jac[..., row, blk.index[row, col]] += u[..., col]
        blk = self.blocks[bias]
        for (row,) in zip(*np.nonzero(blk.index >= 0)):
            jac[..., row, blk.index[row]] += 1.0
        return jac

    def diffusion_jac_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        g = np.exp(self.blocks["log_diffusion"].build(theta))
        nx, nt = self.dims.nx, self.dims.ntheta
        jac = np.zeros((nx, nx, nt))
        idx = self.blocks["log_diffusion"].index
        for i in range(nx):
            if idx[i] >= 0:
                jac[i, i, idx[i]] = g[i]
        return jac

    def meas_cov_jac_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = np.exp(2.0 * self.blocks["log_meas_std"].build(theta))
        ny, nt = self.dims.ny, self.dims.ntheta
        jac = np.zeros((ny, ny, nt))
        idx = self.blocks["log_meas_std"].index
        for i in range(ny):
            if idx[i] >= 0:
                jac[i, i, idx[i]] = 2.0 * r[i]
        return jac


@dataclass(frozen=True)
class DiscretizedTransition:
    """Euler-Maruyama one-step transition of a model at period T."""

    model: Model
    period: float

    def mean(self, x_prev, u_prev, theta):
        return em_transition_mean(self.model, self.period, x_prev, u_prev, theta)

    def proc_cov(self, theta):
        return em_process_cov(self.model, self.period, theta)


def em_transition_mean(model, period, x_prev, u_prev, theta):
    """One Euler step: x + T f(x, u, theta)."""
    if period <= 0:
        raise ConfigError(f"sampling period must be positive, got {period}")
    x_prev = np.asarray(x_prev, dtype=float)
    out = x_prev + period * model.drift(x_prev, u_prev, theta)
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))[0]
        index = int(bad[0]) if out.ndim > 1 else None
        raise NonFiniteError("drift produced a non-finite value", index=index)
    return out


def em_process_cov(model, period, theta):
    """Process-noise covariance Q = T G G^T (exactly symmetric)."""
    if period <= 0:
        raise ConfigError(f"sampling period must be positive, got {period}")
    g = np.atleast_2d(np.asarray(model.diffusion(theta), dtype=float))
    return exact_symmetric(period * (g @ g.T))


def process_cov_chol(model, period, theta):
    """Cholesky factor of Q, failing with a diffusion-specific diagnostic."""
    q = em_process_cov(model, period, theta)
    try:
        return np.linalg.cholesky(q)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(
            "process-noise covariance Q = T G G^T is singular; the diffusion "
            "parameterization must have full row rank (as many independent "
            "noise channels as states), or the state space reduced") from None


def transition_logpdf(model, period, x_k, x_prev, u_prev, theta):
    """Log density of the Euler-Maruyama Gaussian transition."""
    chol = process_cov_chol(model, period, theta)
    mean = em_transition_mean(model, period, x_prev, u_prev, theta)
    return mvn_logpdf_chol(np.asarray(x_k, dtype=float) - mean, chol)


def measurement_logpdf(model, y_k, x_k, u_k, theta, observed=None):
    """Log density of the measurement y_k given the state x_k.

    ``observed`` is an optional boolean mask over output channels; missing
    channels are marginalized out (the corresponding R sub-block dropped).
    An all-missing sample contributes exactly 0.
    """
    cov = np.asarray(model.meas_cov(theta), dtype=float)
    y_k = np.asarray(y_k, dtype=float)
    mean = model.output(x_k, u_k, theta)
    if observed is not None:
        observed = np.asarray(observed, dtype=bool)
        if not observed.any():
            return np.zeros(np.broadcast(y_k[..., 0], mean[..., 0]).shape)[()]
        y_k = y_k[..., observed]
        mean = mean[..., observed]
        cov = cov[np.ix_(observed, observed)]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(
            "measurement covariance R is singular") from None
    return mvn_logpdf_chol(y_k - mean, chol)
