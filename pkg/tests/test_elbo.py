import numpy as np
import pytest

from oracles import random_stable_lti, random_steady_q
from varsysid.data import make_dataset
from varsysid.elbo import (DIFFUSE, InitialStatePrior, elbo_gradient,
                           elbo_value, elbo_value_and_gradient)
from varsysid.errors import SingularCovarianceError
from varsysid.gauss_markov import SteadyStateGaussMarkov
from varsysid.kalman import LgssDiscrete, kf_loglik, rts_smoother
from varsysid.model import Model, ModelDims
from varsysid.packing import layout_for

PERIOD = 0.1


def random_problem(rng, nx=2, nu=1, ny=2, nsamp=8, mask_frac=0.0):
    model, theta = random_stable_lti(rng, nx=nx, nu=nu, ny=ny, period=PERIOD)
    sys = LgssDiscrete.from_lti(model, theta, PERIOD)
    u = rng.standard_normal((nsamp, nu))
    y = rng.standard_normal((nsamp, ny))
    mask = rng.random((nsamp, ny)) >= mask_frac
    if not mask.any():
        mask[0, 0] = True
    data = make_dataset(PERIOD, u, y, y_mask=mask)
    prior = InitialStatePrior.gaussian(rng.standard_normal(nx),
                                       np.eye(nx) * rng.uniform(0.5, 2.0))
    return model, theta, sys, data, prior


def test_single_sample_identity_case():
    # one measurement, h(x) = x, R = 1, diffuse prior, q = N(y0, 1):
    # q is the exact posterior and the evidence is exactly 1
    model, _ = random_stable_lti(np.random.default_rng(0), nx=1, nu=1, ny=1)
    theta = model.extract_theta({
        "a": np.zeros((1, 1)), "b": np.zeros((1, 1)), "c": np.eye(1),
        "d": np.zeros((1, 1)), "bias_state": np.zeros(1),
        "bias_output": np.zeros(1), "log_diffusion": np.zeros(1),
        "log_meas_std": np.zeros(1)})
    y0 = 1.7
    data = make_dataset(PERIOD, np.zeros((1, 1)), np.array([[y0]]))
    q = SteadyStateGaussMarkov(np.array([[y0]]), np.eye(1), np.zeros((1, 1)))
    for engine in ("generic", "fast"):
        b = elbo_value(model, data, q, theta, DIFFUSE, engine=engine)
        assert b.prior_term == 0.0
        assert b.transition_term == 0.0
        assert b.measurement_term == pytest.approx(
            -0.5 * np.log(2 * np.pi) - 0.5, rel=1e-12)
        assert b.entropy_term == pytest.approx(0.5 * (np.log(2 * np.pi) + 1),
                                               rel=1e-12)
        assert b.total == pytest.approx(0.0, abs=1e-12)


def test_breakdown_total_is_exact_sum(rng):
    model, theta, _, data, prior = random_problem(rng)
    q, _ = random_steady_q(rng, 2, nsamp=8)
    b = elbo_value(model, data, q, theta, prior)
    assert b.total == b.prior_term + b.transition_term \
        + b.measurement_term + b.entropy_term


def test_fast_and_generic_engines_agree(rng):
    for trial in range(10):
        nx = int(rng.integers(1, 4))
        ny = int(rng.integers(1, 3))
        model, theta, _, data, prior = random_problem(
            rng, nx=nx, ny=ny, nsamp=7, mask_frac=0.2 if trial % 2 else 0.0)
        q, _ = random_steady_q(rng, nx, nsamp=7)
        use_prior = prior if trial % 3 else DIFFUSE
        bf, gf = elbo_value_and_gradient(model, data, q, theta, use_prior,
                                         engine="fast")
        bg, gg = elbo_value_and_gradient(model, data, q, theta, use_prior,
                                         engine="generic")
        for name in ("prior_term", "transition_term", "measurement_term",
                     "entropy_term", "total"):
            assert getattr(bf, name) == pytest.approx(
                getattr(bg, name), rel=1e-10, abs=1e-10)
        scale = np.abs(gg).max()
        assert np.allclose(gf, gg, rtol=1e-8, atol=1e-9 * max(scale, 1.0))


def test_tightness_at_exact_posterior(rng):
    # with q set to the RTS posterior the bound equals the log-likelihood
    for _ in range(5):
        nx = int(rng.integers(1, 4))
        ny = int(rng.integers(1, 3))
        model, theta, sys, data, prior = random_problem(rng, nx=nx, ny=ny,
                                                        nsamp=6)
        filt = kf_loglik(sys, data, prior.mean, prior.cov)
        q = rts_smoother(sys, filt)
        b = elbo_value(model, data, q, theta, prior)
        assert b.total == pytest.approx(filt.log_likelihood, rel=1e-9)


def test_bound_property(rng):
    for _ in range(20):
        nx = int(rng.integers(1, 4))
        model, theta, sys, data, prior = random_problem(rng, nx=nx, nsamp=8)
        q, _ = random_steady_q(rng, nx, nsamp=8)
        loglik = kf_loglik(sys, data, prior.mean, prior.cov).log_likelihood
        b = elbo_value(model, data, q, theta, prior)
        assert b.total <= loglik + 1e-8


def test_gradient_matches_finite_differences_steady(rng):
    model, theta, _, data, prior = random_problem(rng, nx=2, ny=2, nsamp=6,
                                                  mask_frac=0.15)
    q, _ = random_steady_q(rng, 2, nsamp=6)
    layout = layout_for(q, theta.size)
    vec = layout.pack(theta, q)
    for engine in ("fast", "generic"):
        _check_gradient(model, data, layout, vec, prior, engine)


def test_gradient_matches_finite_differences_general(rng):
    model, theta, _, data, prior = random_problem(rng, nx=2, ny=2, nsamp=5)
    q, _ = random_steady_q(rng, 2, nsamp=5)
    qgen = q.as_general()
    layout = layout_for(qgen, theta.size)
    vec = layout.pack(theta, qgen)
    # perturb per-step blocks so the general parameterization is exercised
    vec = vec + 0.01 * np.random.default_rng(1).standard_normal(vec.size)
    _check_gradient(model, data, layout, vec, prior, "generic")


def _check_gradient(model, data, layout, vec, prior, engine, rel=1e-5,
                    abs_tol=1e-7):
    theta0, q0 = layout.unpack(vec)
    _, grad = elbo_value_and_gradient(model, data, q0, theta0, prior,
                                      engine=engine)
    eps = 1e-6
    fd = np.empty_like(grad)
    for j in range(vec.size):
        vp, vm = vec.copy(), vec.copy()
        vp[j] += eps
        vm[j] -= eps
        tp, qp = layout.unpack(vp)
        tm, qm = layout.unpack(vm)
        fp = elbo_value(model, data, qp, tp, prior, engine=engine).total
        fm = elbo_value(model, data, qm, tm, prior, engine=engine).total
        fd[j] = (fp - fm) / (2 * eps)
    scale = np.maximum(np.abs(fd), np.abs(grad))
    err = np.abs(fd - grad)
    assert np.all(err <= rel * scale + abs_tol), \
        f"max grad error {(err / (scale + 1e-12)).max():.2e} ({engine})"


def test_gradient_first_order_at_optimum_direction(rng):
    # along mu, the bound is concave; the gradient at the RTS means of the
    # exact posterior projected onto mu must be ~0 for matched covariances
    model, theta, sys, data, prior = random_problem(rng, nx=1, ny=1, nsamp=6)
    filt = kf_loglik(sys, data, prior.mean, prior.cov)
    qpost = rts_smoother(sys, filt)
    grad = elbo_gradient(model, data, qpost, theta, prior)
    layout = layout_for(qpost, theta.size)
    sl = layout._slices()[1]
    assert np.abs(grad[sl]).max() <= 1e-7


def test_unused_theta_entry_has_zero_gradient(rng):
    class IgnoresSecondParam(Model):
        def __init__(self):
            self.dims = ModelDims(nx=1, nu=0, ny=1, ntheta=2)

        def drift(self, x, u, theta):
            return -np.exp(theta[0]) * x

        def diffusion(self, theta):
            return np.eye(1)

        def output(self, x, u, theta):
            return x

        def meas_cov(self, theta):
            return np.eye(1)

    model = IgnoresSecondParam()
    nsamp = 5
    data = make_dataset(PERIOD, np.zeros((nsamp, 0)),
                        rng.standard_normal((nsamp, 1)))
    q, _ = random_steady_q(rng, 1, nsamp=nsamp)
    grad = elbo_gradient(model, data, q, np.array([0.3, 9.9]))
    assert grad[1] == 0.0


def test_invalid_cond_covariance_raises(rng):
    model, theta, _, data, _ = random_problem(rng, nx=1, ny=1, nsamp=4)
    q = SteadyStateGaussMarkov(np.zeros((4, 1)), np.array([[-0.1]]),
                               np.array([[0.0]]))
    with pytest.raises(SingularCovarianceError):
        elbo_value(model, data, q, theta)


def test_slow_mixing_q_still_evaluates(rng):
    # rho of the implied transition ~ 0.99: valid, slowly mixing
    model, theta, sys, data, prior = random_problem(rng, nx=1, ny=1, nsamp=6)
    q = SteadyStateGaussMarkov(np.zeros((6, 1)), np.array([[0.1]]),
                               np.array([[5.0]]))
    b = elbo_value(model, data, q, theta, prior)
    loglik = kf_loglik(sys, data, prior.mean, prior.cov).log_likelihood
    assert np.isfinite(b.total)
    assert b.total <= loglik + 1e-8


def test_rank_deficient_diffusion_flagged(rng):
    class RankDeficient(Model):
        def __init__(self):
            self.dims = ModelDims(nx=2, nu=0, ny=1, ntheta=0)

        def drift(self, x, u, theta):
            return -x

        def diffusion(self, theta):
            return np.array([[1.0], [0.0]])

        def output(self, x, u, theta):
            return x[..., :1]

        def meas_cov(self, theta):
            return np.eye(1)

    data = make_dataset(PERIOD, np.zeros((3, 0)), rng.standard_normal((3, 1)))
    q, _ = random_steady_q(rng, 2, nsamp=3)
    with pytest.raises(SingularCovarianceError, match="diffusion"):
        elbo_value(RankDeficient(), data, q, np.zeros(0))


def test_entropy_regularizes_against_collapse():
    # without the entropy term the objective rewards ever-smaller covariances
    # (collapse to the MAP point); with it the optimum is interior.
    # single measurement, h(x) = x, R = 1, q = N(y0, s):
    # total(s) = -log(2 pi)/2 - s/2 + log(2 pi e s)/2, maximized at s = 1.
    model, _ = random_stable_lti(np.random.default_rng(3), nx=1, nu=1, ny=1)
    theta = model.extract_theta({
        "a": np.zeros((1, 1)), "b": np.zeros((1, 1)), "c": np.eye(1),
        "d": np.zeros((1, 1)), "bias_state": np.zeros(1),
        "bias_output": np.zeros(1), "log_diffusion": np.zeros(1),
        "log_meas_std": np.zeros(1)})
    y0 = -0.4
    data = make_dataset(PERIOD, np.zeros((1, 1)), np.array([[y0]]))
    scales = np.linspace(0.05, 2.0, 40)
    with_ent = []
    without_ent = []
    for s in scales:
        q = SteadyStateGaussMarkov(np.array([[y0]]), np.array([[s]]),
                                   np.zeros((1, 1)))
        b = elbo_value(model, data, q, theta)
        with_ent.append(b.total)
        without_ent.append(b.total - b.entropy_term)
    assert scales[int(np.argmax(without_ent))] \
        < scales[int(np.argmax(with_ent))]
    assert scales[int(np.argmax(with_ent))] == pytest.approx(1.0, abs=0.06)


def test_time_additivity_of_sum_structure(rng):
    model, theta, _, _, _ = random_problem(rng, nx=2, ny=2, nsamp=4)
    n_a, n_b = 5, 4
    nsamp = n_a + n_b + 1
    u = rng.standard_normal((nsamp, 1))
    y = rng.standard_normal((nsamp, 2))
    data = make_dataset(PERIOD, u, y)
    q, _ = random_steady_q(rng, 2, nsamp=nsamp)
    whole = elbo_value(model, data, q, theta)

    # segment B's first measurement is masked so it is counted exactly once
    mask_b = np.ones((n_b + 1, 2), dtype=bool)
    mask_b[0] = False
    data_a = make_dataset(PERIOD, u[:n_a + 1], y[:n_a + 1])
    data_b = make_dataset(PERIOD, u[n_a:], y[n_a:], y_mask=mask_b)
    q_a = SteadyStateGaussMarkov(q.mu[:n_a + 1], q.sigma_cond, q.sigma_cross)
    q_b = SteadyStateGaussMarkov(q.mu[n_a:], q.sigma_cond, q.sigma_cross)
    part_a = elbo_value(model, data_a, q_a, theta)
    part_b = elbo_value(model, data_b, q_b, theta)
    assert whole.transition_term == pytest.approx(
        part_a.transition_term + part_b.transition_term, rel=1e-12)
    assert whole.measurement_term == pytest.approx(
        part_a.measurement_term + part_b.measurement_term, rel=1e-12)
