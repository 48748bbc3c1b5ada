import numpy as np
import pytest

from oracles import (dense_loglik, dense_smoother, mvn_logpdf_dense,
                     random_stable_lti)
from varsysid.data import make_dataset
from varsysid.kalman import (LgssDiscrete, kf_loglik, predict_one_step,
                             rts_smoother, steady_state_kf)
from varsysid.model import em_process_cov, em_transition_mean, transition_logpdf


def random_system(rng, nx=2, nu=1, ny=2, period=0.1):
    model, theta = random_stable_lti(rng, nx=nx, nu=nu, ny=ny, period=period)
    return LgssDiscrete.from_lti(model, theta, period), model, theta


def random_record(rng, sys, nsamp, mask_frac=0.0):
    u = rng.standard_normal((nsamp, sys.gamma_u.shape[1]))
    y = rng.standard_normal((nsamp, sys.ny))
    mask = rng.random((nsamp, sys.ny)) >= mask_frac
    return make_dataset(0.1, u, y, y_mask=mask)


def test_from_lti_matches_em_transition(rng):
    sys, model, theta = random_system(rng)
    x_prev = rng.standard_normal(2)
    u_prev = rng.standard_normal(1)
    mean_lgss = sys.phi @ x_prev + sys.gamma_u @ u_prev + sys.bias_x
    mean_em = em_transition_mean(model, 0.1, x_prev, u_prev, theta)
    assert np.allclose(mean_lgss, mean_em, rtol=1e-14)
    assert np.allclose(sys.q, em_process_cov(model, 0.1, theta))
    x_k = rng.standard_normal(2)
    lgss_logpdf = mvn_logpdf_dense(x_k, mean_lgss, sys.q)
    assert transition_logpdf(model, 0.1, x_k, x_prev, u_prev, theta) \
        == pytest.approx(lgss_logpdf, rel=1e-12)


def test_kf_static_scalar_convolution():
    # Phi = 1, tiny Q, C = 1, R = 1, prior N(0, 1): y_0 ~ N(0, 2)
    sys = LgssDiscrete(phi=np.eye(1), gamma_u=np.zeros((1, 0)),
                       bias_x=np.zeros(1), q=np.eye(1) * 1e-12,
                       c=np.eye(1), d=np.zeros((1, 0)), bias_y=np.zeros(1),
                       r=np.eye(1))
    data = make_dataset(1.0, np.zeros((1, 0)), np.zeros((1, 1)))
    res = kf_loglik(sys, data, prior_mean=np.zeros(1), prior_cov=np.eye(1))
    assert res.log_likelihood == pytest.approx(-0.5 * np.log(4 * np.pi),
                                               abs=1e-9)


@pytest.mark.parametrize("nx,ny,nsamp", [(1, 1, 4), (2, 1, 6), (3, 2, 8),
                                         (2, 2, 9)])
def test_kf_loglik_matches_dense_joint(rng, nx, ny, nsamp):
    sys, _, _ = random_system(rng, nx=nx, ny=ny)
    data = random_record(rng, sys, nsamp)
    prior_mean = rng.standard_normal(nx)
    root = rng.standard_normal((nx, nx))
    prior_cov = root @ root.T + nx * np.eye(nx)
    got = kf_loglik(sys, data, prior_mean, prior_cov).log_likelihood
    want = dense_loglik(sys, data, prior_mean, prior_cov)
    assert got == pytest.approx(want, rel=1e-9)


def test_kf_loglik_with_missing_entries(rng):
    sys, _, _ = random_system(rng, nx=2, ny=2)
    data = random_record(rng, sys, 7, mask_frac=0.3)
    prior_mean = np.zeros(2)
    prior_cov = 2.0 * np.eye(2)
    got = kf_loglik(sys, data, prior_mean, prior_cov).log_likelihood
    want = dense_loglik(sys, data, prior_mean, prior_cov)
    assert got == pytest.approx(want, rel=1e-9)


def test_kf_loglik_resummation_invariant(rng):
    sys, _, _ = random_system(rng)
    data = random_record(rng, sys, 12)
    res = kf_loglik(sys, data, np.zeros(2), np.eye(2))
    total = 0.0
    for innov, s_cov in zip(res.innovations, res.innovation_covs):
        if innov.size:
            total += mvn_logpdf_dense(innov, np.zeros(innov.size), s_cov)
    assert res.log_likelihood == pytest.approx(total, rel=1e-12)


def test_kf_channel_permutation_symmetry(rng):
    sys, _, _ = random_system(rng, nx=2, ny=2)
    # two identical independent channels
    c = np.vstack([sys.c[0], sys.c[0]])
    d = np.vstack([sys.d[0], sys.d[0]])
    bias = np.array([sys.bias_y[0], sys.bias_y[0]])
    r = np.diag([0.5, 0.5])
    base = LgssDiscrete(sys.phi, sys.gamma_u, sys.bias_x, sys.q, c, d, bias, r)
    data = random_record(rng, base, 9)
    flipped = make_dataset(0.1, data.u, data.y[:, ::-1])
    l1 = kf_loglik(base, data, np.zeros(2), np.eye(2)).log_likelihood
    l2 = kf_loglik(base, flipped, np.zeros(2), np.eye(2)).log_likelihood
    assert l1 == pytest.approx(l2, rel=1e-12)


@pytest.mark.parametrize("nx,ny,nsamp", [(1, 1, 4), (2, 2, 6), (3, 2, 8)])
def test_rts_matches_dense_conditioning(rng, nx, ny, nsamp):
    sys, _, _ = random_system(rng, nx=nx, ny=ny)
    data = random_record(rng, sys, nsamp)
    prior_mean = rng.standard_normal(nx)
    prior_cov = 1.5 * np.eye(nx)
    filt = kf_loglik(sys, data, prior_mean, prior_cov)
    q = rts_smoother(sys, filt)
    post_mean, post_cov = dense_smoother(sys, data, prior_mean, prior_cov)
    margs = q.marginals()
    for k in range(nsamp):
        sl = slice(k * nx, (k + 1) * nx)
        assert np.allclose(q.mu[k], post_mean[sl], rtol=1e-9, atol=1e-9)
        assert np.allclose(margs[k], post_cov[sl, sl], rtol=1e-9, atol=1e-9)
    for k in range(1, nsamp):
        cross = post_cov[k * nx:(k + 1) * nx, (k - 1) * nx:k * nx]
        assert np.allclose(q.sigma_cross[k - 1], cross, rtol=1e-8, atol=1e-9)


def test_rts_no_measurements_equals_prior_prediction(rng):
    sys, _, _ = random_system(rng)
    nsamp = 5
    data = make_dataset(0.1, rng.standard_normal((nsamp, 1)),
                        np.zeros((nsamp, 2)),
                        y_mask=np.zeros((nsamp, 2), dtype=bool))
    filt = kf_loglik(sys, data, np.zeros(2), np.eye(2))
    assert filt.log_likelihood == 0.0
    q = rts_smoother(sys, filt)
    assert np.allclose(q.mu, filt.predicted_means, atol=1e-12)
    assert np.allclose(q.marginals(), filt.predicted_covs, atol=1e-10)


def test_rts_covariances_never_exceed_filter(rng):
    sys, _, _ = random_system(rng)
    data = random_record(rng, sys, 10)
    filt = kf_loglik(sys, data, np.zeros(2), np.eye(2))
    q = rts_smoother(sys, filt)
    margs = q.marginals()
    for k in range(10):
        gap = filt.updated_covs[k] - margs[k]
        assert np.linalg.eigvalsh(gap).min() >= -1e-9


def test_steady_state_white_noise_case(rng):
    q_cov = np.array([[0.7, 0.1], [0.1, 0.5]])
    c = rng.standard_normal((2, 2))
    r = np.eye(2) * 0.4
    sys = LgssDiscrete(phi=np.zeros((2, 2)), gamma_u=np.zeros((2, 0)),
                       bias_x=np.zeros(2), q=q_cov, c=c,
                       d=np.zeros((2, 0)), bias_y=np.zeros(2), r=r)
    gain, pred_cov = steady_state_kf(sys)
    assert np.allclose(pred_cov, q_cov, rtol=1e-10)
    expect_gain = q_cov @ c.T @ np.linalg.inv(c @ q_cov @ c.T + r)
    assert np.allclose(gain, expect_gain, rtol=1e-10)


def test_steady_state_scalar_riccati():
    sys = LgssDiscrete(phi=np.array([[0.9]]), gamma_u=np.zeros((1, 0)),
                       bias_x=np.zeros(1), q=np.array([[0.19]]),
                       c=np.eye(1), d=np.zeros((1, 0)), bias_y=np.zeros(1),
                       r=np.eye(1))
    _, pred_cov = steady_state_kf(sys)
    p = pred_cov[0, 0]
    # fixed point of p = 0.81 p (1 - p/(p+1)) + 0.19, i.e. the positive root
    # of the quadratic p^2 + (0.19... ) rearranged below
    resid = 0.81 * p * (1 - p / (p + 1)) + 0.19 - p
    assert abs(resid) <= 1e-10
    roots = np.roots([1.0, 1.0 - 0.81 - 0.19, -0.19])
    positive = roots[roots > 0][0]
    assert p == pytest.approx(positive, abs=1e-10)


def test_steady_state_matches_long_filter_run(rng):
    sys, _, _ = random_system(rng)
    data = random_record(rng, sys, 400)
    filt = kf_loglik(sys, data, np.zeros(2), 10 * np.eye(2))
    _, pred_cov = steady_state_kf(sys)
    assert np.allclose(filt.predicted_covs[-1], pred_cov, rtol=1e-8, atol=1e-8)


def test_steady_state_riccati_fixed_point_residual(rng):
    sys, _, _ = random_system(rng, nx=3, ny=2)
    gain, pred_cov = steady_state_kf(sys)
    upd = pred_cov - gain @ sys.c @ pred_cov
    nxt = sys.phi @ upd @ sys.phi.T + sys.q
    assert np.abs(nxt - pred_cov).max() <= 1e-10 * max(np.abs(pred_cov).max(), 1)


def test_predict_one_step_zero_gain_is_free_simulation(rng):
    sys, _, _ = random_system(rng)
    data = random_record(rng, sys, 8)
    preds = predict_one_step(sys, np.zeros((2, 2)), data, x0=np.zeros(2))
    mean = np.zeros(2)
    for k in range(8):
        expect = sys.c @ mean + sys.d @ data.u[k] + sys.bias_y
        assert np.allclose(preds[k], expect, rtol=1e-12)
        mean = sys.phi @ mean + sys.gamma_u @ data.u[k] + sys.bias_x


def test_predict_one_step_converges_on_noise_free_data(rng):
    sys, model, theta = random_system(rng, nx=2, ny=2)
    nsamp = 300
    u = rng.standard_normal((nsamp, 1))
    x = np.zeros((nsamp, 2))
    x[0] = rng.standard_normal(2)
    for k in range(1, nsamp):
        x[k] = sys.phi @ x[k - 1] + sys.gamma_u @ u[k - 1] + sys.bias_x
    y = x @ sys.c.T + u @ sys.d.T + sys.bias_y
    data = make_dataset(0.1, u, y)
    gain, _ = steady_state_kf(sys)
    preds = predict_one_step(sys, gain, data, x0=np.zeros(2))
    err = np.linalg.norm(preds - y, axis=1)
    assert err[-1] <= 1e-6 * max(err[0], 1.0)


def test_predict_one_step_first_prediction_uses_x0(rng):
    sys, _, _ = random_system(rng)
    data = random_record(rng, sys, 3)
    x0 = rng.standard_normal(2)
    gain, _ = steady_state_kf(sys)
    preds = predict_one_step(sys, gain, data, x0=x0)
    assert np.allclose(preds[0], sys.c @ x0 + sys.d @ data.u[0] + sys.bias_y)
