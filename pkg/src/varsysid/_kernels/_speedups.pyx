# cython: language_level=3
"""Compiled twins of the reference kernels (see reference.py for contracts).

The loops are fused over samples with hand-rolled forward/backward
substitution, which avoids the per-call temporaries and LAPACK dispatch of
the numpy fallback at the small state dimensions typical here.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()


@cython.boundscheck(False)
@cython.wraparound(False)
cdef inline void _solve_lower(const double[:, ::1] chol, const double* rhs,
                              double* out, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(d):
        acc = rhs[i]
        for j in range(i):
            acc -= chol[i, j] * out[j]
        out[i] = acc / chol[i, i]


@cython.boundscheck(False)
@cython.wraparound(False)
cdef inline void _solve_upper_t(const double[:, ::1] chol, double* inout,
                                Py_ssize_t d) noexcept nogil:
    # solves L^T z = inout in place (L lower triangular)
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(d - 1, -1, -1):
        acc = inout[i]
        for j in range(i + 1, d):
            acc -= chol[j, i] * inout[j]
        inout[i] = acc / chol[i, i]


def solve_quad_gram(chol_in, x_in):
    cdef double[:, ::1] chol = np.ascontiguousarray(chol_in, dtype=np.float64)
    cdef double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t d = chol.shape[0]
    p_arr = np.empty((m, d), dtype=np.float64)
    gram_arr = np.zeros((d, d), dtype=np.float64)
    cdef double[:, ::1] p = p_arr
    cdef double[:, ::1] gram = gram_arr
    # quadsum is Kahan-compensated: plain accumulation over long records
    # leaves O(m eps) drift in the objective, which line searches then
    # mistake for curvature near convergence
    cdef double quadsum = 0.0
    cdef double comp = 0.0
    cdef double term, t
    cdef Py_ssize_t k, i, j
    with nogil:
        for k in range(m):
            _solve_lower(chol, &x[k, 0], &p[k, 0], d)
            for i in range(d):
                term = p[k, i] * p[k, i] - comp
                t = quadsum + term
                comp = (t - quadsum) - term
                quadsum = t
            _solve_upper_t(chol, &p[k, 0], d)
            for i in range(d):
                for j in range(d):
                    gram[i, j] += p[k, i] * p[k, j]
    return p_arr, quadsum, gram_arr


@cython.boundscheck(False)
@cython.wraparound(False)
cdef int _chol_inplace(double[:, ::1] a, Py_ssize_t d) noexcept nogil:
    # lower Cholesky factorization in place; returns nonzero on failure
    cdef Py_ssize_t i, j, k
    cdef double acc
    for j in range(d):
        acc = a[j, j]
        for k in range(j):
            acc -= a[j, k] * a[j, k]
        if acc <= 0.0:
            return 1
        a[j, j] = acc ** 0.5
        for i in range(j + 1, d):
            acc = a[i, j]
            for k in range(j):
                acc -= a[i, k] * a[j, k]
            a[i, j] = acc / a[j, j]
    for j in range(d):
        for i in range(j + 1, d):
            a[j, i] = 0.0
    return 0


def marg_forward(cond_in, cross_in):
    cdef double[:, :, ::1] cond = np.ascontiguousarray(cond_in, dtype=np.float64)
    cdef double[:, :, ::1] cross = np.ascontiguousarray(cross_in, dtype=np.float64)
    cdef Py_ssize_t nsamp = cond.shape[0]
    cdef Py_ssize_t d = cond.shape[1]
    margs_arr = np.empty((nsamp, d, d), dtype=np.float64)
    cdef double[:, :, ::1] margs = margs_arr
    work_arr = np.empty((d, d), dtype=np.float64)
    half_arr = np.empty((d, d), dtype=np.float64)
    cdef double[:, ::1] work = work_arr
    cdef double[:, ::1] half = half_arr
    cdef Py_ssize_t k, i, j, r
    cdef double acc
    cdef int fail = 0
    cdef Py_ssize_t fail_k = 0
    with nogil:
        for i in range(d):
            for j in range(d):
                margs[0, i, j] = cond[0, i, j]
        for k in range(1, nsamp):
            for i in range(d):
                for j in range(d):
                    work[i, j] = margs[k - 1, i, j]
            if _chol_inplace(work, d):
                fail = 1
                fail_k = k - 1
                break
            # half[:, r] = L^{-1} cross[k-1][r, :]^T  (column r per row of X)
            for r in range(d):
                _solve_lower(work, &cross[k - 1, r, 0], &half[r, 0], d)
            # margs[k] = cond[k] + half half^T (rows of half are L^{-1} X^T cols)
            for i in range(d):
                for j in range(i + 1):
                    acc = cond[k, i, j]
                    for r in range(d):
                        acc += half[i, r] * half[j, r]
                    margs[k, i, j] = acc
                    margs[k, j, i] = acc
    if fail:
        raise np.linalg.LinAlgError(
            f"marginal covariance not positive definite at step {fail_k}")
    return margs_arr


def marg_backward(margs_in, cross_in, sbar_in):
    cdef double[:, :, ::1] margs = np.ascontiguousarray(margs_in, dtype=np.float64)
    cdef double[:, :, ::1] cross = np.ascontiguousarray(cross_in, dtype=np.float64)
    sbar_arr = np.array(sbar_in, dtype=np.float64, copy=True, order="C")
    cdef double[:, :, ::1] sbar = sbar_arr
    cdef Py_ssize_t nsamp = margs.shape[0]
    cdef Py_ssize_t d = margs.shape[1]
    cond_bar_arr = np.zeros((nsamp, d, d), dtype=np.float64)
    cross_bar_arr = np.zeros((max(nsamp - 1, 0), d, d), dtype=np.float64)
    cdef double[:, :, ::1] cond_bar = cond_bar_arr
    cdef double[:, :, ::1] cross_bar = cross_bar_arr
    work_arr = np.empty((d, d), dtype=np.float64)
    gain_arr = np.empty((d, d), dtype=np.float64)
    tmp_arr = np.empty((d, d), dtype=np.float64)
    cdef double[:, ::1] work = work_arr
    cdef double[:, ::1] gain = gain_arr
    cdef double[:, ::1] tmp = tmp_arr
    cdef Py_ssize_t k, i, j, r
    cdef double acc
    with nogil:
        for k in range(nsamp - 1, 0, -1):
            for i in range(d):
                for j in range(d):
                    work[i, j] = margs[k - 1, i, j]
            _chol_inplace(work, d)  # margs came from a successful forward pass
            # gain = X S^{-1}: solve (L L^T) g_r = X[r, :] row-wise
            for r in range(d):
                _solve_lower(work, &cross[k - 1, r, 0], &gain[r, 0], d)
                _solve_upper_t(work, &gain[r, 0], d)
            for i in range(d):
                for j in range(d):
                    cond_bar[k, i, j] += sbar[k, i, j]
            # cross_bar[k-1] += (sbar_k + sbar_k^T) gain
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for r in range(d):
                        acc += (sbar[k, i, r] + sbar[k, r, i]) * gain[r, j]
                    cross_bar[k - 1, i, j] += acc
            # sbar[k-1] -= gain^T sbar_k gain
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for r in range(d):
                        acc += sbar[k, i, r] * gain[r, j]
                    tmp[i, j] = acc
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for r in range(d):
                        acc += gain[r, i] * tmp[r, j]
                    sbar[k - 1, i, j] -= acc
    for i in range(d):
        for j in range(d):
            cond_bar_arr[0, i, j] += sbar_arr[0, i, j]
    return cond_bar_arr, cross_bar_arr
