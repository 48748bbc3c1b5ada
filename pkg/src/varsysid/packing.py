"""Bijective packing of decision variables into one unconstrained vector.

Layout (steady-state family): [theta | mu row-major | log-Cholesky of
Sigma_cond | Sigma_cross row-major]. Diagonal Cholesky entries are stored as
logarithms, so every real vector decodes to a valid density and the all-zeros
vector decodes to theta = 0, mu = 0, Sigma_cond = I, Sigma_cross = 0.

The general (per-step) family appends one log-Cholesky block per step and one
cross block per transition instead of the two shared blocks.
"""

from dataclasses import dataclass

import numpy as np

from .errors import VarsysidError
from .gauss_markov import GeneralGaussMarkov, SteadyStateGaussMarkov
from .linalg import (chol_to_logchol, cholesky_spd, exact_symmetric,
                     logchol_to_chol)


def _chol_vec_of_cov(cov, context):
    return chol_to_logchol(cholesky_spd(cov, context=context))


def _cov_of_chol_vec(vec, nx):
    chol = logchol_to_chol(vec, nx)
    return exact_symmetric(chol @ chol.T)


@dataclass(frozen=True)
class SteadyStateLayout:
    """Offsets of the steady-state decision vector."""

    ntheta: int
    nx: int
    nsamp: int  # N + 1

    @property
    def nchol(self):
        return self.nx * (self.nx + 1) // 2

    @property
    def size(self):
        return self.ntheta + self.nsamp * self.nx + self.nchol + self.nx ** 2

    @property
    def family(self):
        return "steady"

    def _slices(self):
        a = self.ntheta
        b = a + self.nsamp * self.nx
        c = b + self.nchol
        d = c + self.nx ** 2
        return slice(0, a), slice(a, b), slice(b, c), slice(c, d)

    def pack(self, theta, q):
        sth, smu, sco, scr = self._slices()
        out = np.empty(self.size)
        out[sth] = np.asarray(theta, dtype=float)
        out[smu] = np.asarray(q.mu, dtype=float).ravel()
        out[sco] = _chol_vec_of_cov(q.sigma_cond, "Sigma_cond")
        out[scr] = np.asarray(q.sigma_cross, dtype=float).ravel()
        return out

    def unpack(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise VarsysidError(f"decision vector length {vec.shape} does not "
                                f"match layout size {self.size}")
        sth, smu, sco, scr = self._slices()
        theta = vec[sth].copy()
        mu = vec[smu].reshape(self.nsamp, self.nx).copy()
        cond = _cov_of_chol_vec(vec[sco], self.nx)
        cross = vec[scr].reshape(self.nx, self.nx).copy()
        return theta, SteadyStateGaussMarkov(mu, cond, cross)

    def pack_grad(self, theta_bar, mu_bar, cond_logchol_bar, cross_bar):
        sth, smu, sco, scr = self._slices()
        out = np.empty(self.size)
        out[sth] = theta_bar
        out[smu] = np.asarray(mu_bar).ravel()
        out[sco] = cond_logchol_bar
        out[scr] = np.asarray(cross_bar).ravel()
        return out

    def q_block_mask(self):
        """Boolean mask selecting the q blocks (everything but theta)."""
        mask = np.ones(self.size, dtype=bool)
        mask[:self.ntheta] = False
        return mask


@dataclass(frozen=True)
class GeneralLayout:
    """Offsets of the per-step (general-family) decision vector."""

    ntheta: int
    nx: int
    nsamp: int

    @property
    def nchol(self):
        return self.nx * (self.nx + 1) // 2

    @property
    def size(self):
        return (self.ntheta + self.nsamp * self.nx + self.nsamp * self.nchol
                + (self.nsamp - 1) * self.nx ** 2)

    @property
    def family(self):
        return "general"

    def _slices(self):
        a = self.ntheta
        b = a + self.nsamp * self.nx
        c = b + self.nsamp * self.nchol
        d = c + (self.nsamp - 1) * self.nx ** 2
        return slice(0, a), slice(a, b), slice(b, c), slice(c, d)

    def pack(self, theta, q):
        sth, smu, sco, scr = self._slices()
        out = np.empty(self.size)
        out[sth] = np.asarray(theta, dtype=float)
        out[smu] = np.asarray(q.mu, dtype=float).ravel()
        vecs = [_chol_vec_of_cov(q.sigma_cond[k], f"Sigma_cond[{k}]")
                for k in range(self.nsamp)]
        out[sco] = np.concatenate(vecs)
        out[scr] = np.asarray(q.sigma_cross, dtype=float).ravel()
        return out

    def unpack(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise VarsysidError(f"decision vector length {vec.shape} does not "
                                f"match layout size {self.size}")
        sth, smu, sco, scr = self._slices()
        theta = vec[sth].copy()
        mu = vec[smu].reshape(self.nsamp, self.nx).copy()
        chols = vec[sco].reshape(self.nsamp, self.nchol)
        cond = np.stack([_cov_of_chol_vec(chols[k], self.nx)
                         for k in range(self.nsamp)])
        cross = vec[scr].reshape(self.nsamp - 1, self.nx, self.nx).copy()
        return theta, GeneralGaussMarkov(mu, cond, cross)

    def pack_grad(self, theta_bar, mu_bar, cond_logchol_bar, cross_bar):
        sth, smu, sco, scr = self._slices()
        out = np.empty(self.size)
        out[sth] = theta_bar
        out[smu] = np.asarray(mu_bar).ravel()
        out[sco] = np.asarray(cond_logchol_bar).ravel()
        out[scr] = np.asarray(cross_bar).ravel()
        return out

    def q_block_mask(self):
        mask = np.ones(self.size, dtype=bool)
        mask[:self.ntheta] = False
        return mask


def layout_for(q, ntheta):
    """Layout matching an existing assumed density."""
    nsamp = q.mu.shape[0]
    if isinstance(q, SteadyStateGaussMarkov):
        return SteadyStateLayout(ntheta, q.nx, nsamp)
    if isinstance(q, GeneralGaussMarkov):
        return GeneralLayout(ntheta, q.nx, nsamp)
    raise VarsysidError(f"unsupported assumed-density type {type(q)!r}")


def make_layout(family, ntheta, nx, nsamp):
    if family == "steady":
        return SteadyStateLayout(ntheta, nx, nsamp)
    if family == "general":
        return GeneralLayout(ntheta, nx, nsamp)
    raise VarsysidError(f"unknown assumed-density family {family!r}")


def pack(theta, q):
    """Flat decision vector for (theta, q)."""
    return layout_for(q, np.asarray(theta).size).pack(theta, q)


def unpack(vec, layout):
    """Inverse of :func:`pack` under the given layout."""
    return layout.unpack(vec)
