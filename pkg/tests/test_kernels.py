"""Compiled and reference kernel backends must agree to rounding."""

import numpy as np
import pytest

import varsysid._kernels as kernels
from oracles import random_stable_lti, random_steady_q
from varsysid._kernels import reference

compiled = None
try:
    from varsysid._kernels import _speedups as compiled
except ImportError:
    pass

needs_compiled = pytest.mark.skipif(compiled is None,
                                    reason="compiled kernels not built")


def random_chol(rng, d):
    root = rng.standard_normal((d, d))
    return np.linalg.cholesky(root @ root.T + d * np.eye(d))


@needs_compiled
def test_solve_quad_gram_matches_reference(rng):
    for _ in range(25):
        d = int(rng.integers(1, 6))
        m = int(rng.integers(0, 40))
        chol = random_chol(rng, d)
        x = rng.standard_normal((m, d))
        p1, q1, g1 = reference.solve_quad_gram(chol, x)
        p2, q2, g2 = compiled.solve_quad_gram(chol, x)
        assert np.allclose(p1, p2, rtol=1e-13, atol=1e-13)
        assert q1 == pytest.approx(q2, rel=1e-12, abs=1e-13)
        assert np.allclose(g1, g2, rtol=1e-12, atol=1e-13)


@needs_compiled
def test_marg_recursions_match_reference(rng):
    for _ in range(15):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 12))
        q, _ = random_steady_q(rng, d, nsamp=n + 1)
        gen = q.as_general()
        cond, cross = gen.sigma_cond, gen.sigma_cross
        m1 = reference.marg_forward(cond, cross)
        m2 = compiled.marg_forward(cond, cross)
        assert np.allclose(m1, m2, rtol=1e-12, atol=1e-13)
        sbar = rng.standard_normal((n + 1, d, d))
        cb1, xb1 = reference.marg_backward(m1, cross, sbar)
        cb2, xb2 = compiled.marg_backward(m2, cross, sbar)
        assert np.allclose(cb1, cb2, rtol=1e-11, atol=1e-12)
        assert np.allclose(xb1, xb2, rtol=1e-11, atol=1e-12)


@needs_compiled
def test_marg_forward_failure_index_matches(rng):
    cond = np.stack([np.eye(2), -np.eye(2), np.eye(2)])
    cross = np.stack([np.eye(2), np.eye(2)])
    for impl in (reference, compiled):
        with pytest.raises(np.linalg.LinAlgError, match="step 1"):
            impl.marg_forward(cond, cross)


@needs_compiled
def test_elbo_end_to_end_backend_equivalence(rng, monkeypatch):
    from varsysid.data import make_dataset
    from varsysid.elbo import elbo_value_and_gradient

    model, theta = random_stable_lti(rng, nx=2, nu=1, ny=2)
    nsamp = 25
    data = make_dataset(0.1, rng.standard_normal((nsamp, 1)),
                        rng.standard_normal((nsamp, 2)))
    q, _ = random_steady_q(rng, 2, nsamp)
    results = {}
    for name, impl in kernels.get_backends():
        monkeypatch.setattr(kernels, "_IMPL", impl)
        results[name] = elbo_value_and_gradient(model, data, q, theta)
    b_ref, g_ref = results["reference"]
    b_cmp, g_cmp = results["compiled"]
    assert b_cmp.total == pytest.approx(b_ref.total, rel=1e-13)
    assert np.allclose(g_cmp, g_ref, rtol=1e-10, atol=1e-12)


def test_backend_name_reported():
    assert kernels.backend_name in ("compiled", "reference")
    names = [name for name, _ in kernels.get_backends()]
    assert "reference" in names
