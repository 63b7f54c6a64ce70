import numpy as np
import pytest

from jumpcov.kalman import (FilterError, backward_smooth, filtered_posterior,
                            forward_filter, smooth)
from jumpcov.model import ObservationPanel, StateParams

from oracles import joint_gaussian_moments, random_instance


def scalar_params(mu=0.0, k0=1.0, gamma=1.0, obs_var=1.0, drift=0.0):
    return StateParams(drift=np.array([drift]),
                       gamma=np.array([[gamma]]),
                       obs_var=np.array([obs_var]),
                       init_mean=np.array([mu]),
                       init_cov=np.array([[k0]]))


def test_single_step_boundary():
    # one predict-update from the state prior: gain k0 / (k0 + obs_var)
    panel = ObservationPanel.from_records(1, 1, [(1, 1, 2.0)])
    out = forward_filter(panel, scalar_params(gamma=0.0))
    assert out.filtered_mean[0, 0] == pytest.approx(1.0)
    assert out.filtered_cov[0, 0, 0] == pytest.approx(0.5)
    assert out.predicted_mean[0, 0] == 0.0
    assert out.predicted_cov[0, 0, 0] == 1.0


def test_exact_observation_limit():
    rng = np.random.default_rng(0)
    y = rng.standard_normal((6, 2))
    panel = ObservationPanel.from_dense(y, np.ones((6, 2), dtype=bool))
    params = StateParams(drift=np.zeros(2), gamma=np.eye(2),
                         obs_var=np.full(2, 1e-12),
                         init_mean=np.zeros(2), init_cov=np.eye(2))
    out = forward_filter(panel, params)
    assert np.max(np.abs(out.filtered_mean - y)) < 1e-6


def test_missing_row_only_moves_through_cross_term():
    # asset 2 unobserved at t=2: its filtered mean moves from the prediction
    # only via the covariance cross term with the observed asset
    gamma = np.array([[1.0, 0.8], [0.8, 1.0]])
    params = StateParams(drift=np.zeros(2), gamma=gamma, obs_var=np.ones(2),
                         init_mean=np.zeros(2), init_cov=np.eye(2))
    panel = ObservationPanel.from_records(
        2, 2, [(1, 1, 0.0), (1, 2, 0.0), (2, 1, 3.0)])
    out = forward_filter(panel, params)
    assert out.filtered_mean[1, 1] != out.predicted_mean[1, 1]

    diag = StateParams(drift=np.zeros(2), gamma=np.eye(2),
                       obs_var=np.ones(2), init_mean=np.zeros(2),
                       init_cov=np.eye(2))
    out_diag = forward_filter(panel, diag)
    assert out_diag.filtered_mean[1, 1] == pytest.approx(
        out_diag.predicted_mean[1, 1])


def test_two_step_scalar_matches_joint_conditioning():
    panel = ObservationPanel.from_records(1, 2, [(1, 1, 0.0), (2, 1, 2.0)])
    moments = smooth(panel, scalar_params())
    mean, cov, lag, loglik = joint_gaussian_moments(panel, scalar_params())
    assert np.max(np.abs(moments.smoothed_mean - mean)) < 1e-10
    assert np.max(np.abs(moments.smoothed_cov - cov)) < 1e-10
    assert np.max(np.abs(moments.lag_one_cov - lag)) < 1e-10
    assert moments.loglik == pytest.approx(loglik, abs=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_random_instances_match_oracle(seed):
    rng = np.random.default_rng(200 + seed)
    n = int(rng.integers(1, 4))
    big_t = int(rng.integers(2, 6))
    panel, params, jumps = random_instance(rng, n, big_t)
    moments = smooth(panel, params, jumps)
    mean, cov, lag, loglik = joint_gaussian_moments(panel, params, jumps)
    assert np.max(np.abs(moments.smoothed_mean - mean)) < 1e-8
    assert np.max(np.abs(moments.smoothed_cov - cov)) < 1e-8
    assert np.max(np.abs(moments.lag_one_cov - lag)) < 1e-8
    assert abs(moments.loglik - loglik) < 1e-8


def test_no_information_after_last_observation():
    # only t=1 observed: smoothing changes nothing downstream of the data
    panel = ObservationPanel.from_records(1, 4, [(1, 1, 1.0)])
    params = scalar_params(gamma=0.5, drift=0.2)
    out = forward_filter(panel, params)
    moments = backward_smooth(out)
    assert np.allclose(moments.smoothed_mean[1:], out.predicted_mean[1:])
    assert np.allclose(moments.smoothed_mean[1:],
                       moments.smoothed_mean[0] + 0.2 * np.arange(1, 4)[:, None])


def test_zero_process_noise_gain_is_identity():
    # gamma = 0 makes the smoother gain the identity (information flows
    # back losslessly); smoothed moments are constant across time
    panel = ObservationPanel.from_records(1, 3, [(1, 1, 0.5), (2, 1, 0.7),
                                                 (3, 1, 0.9)])
    params = scalar_params(gamma=0.0)
    moments = smooth(panel, params)
    assert np.allclose(moments.smoothed_mean, moments.smoothed_mean[0])
    assert np.allclose(moments.smoothed_cov, moments.smoothed_cov[0])


def test_smooth_equals_two_pass_composition():
    rng = np.random.default_rng(7)
    panel, params, jumps = random_instance(rng, 3, 5)
    one = smooth(panel, params, jumps)
    two = backward_smooth(forward_filter(panel, params, jumps))
    assert np.array_equal(one.smoothed_mean, two.smoothed_mean)
    assert np.array_equal(one.smoothed_cov, two.smoothed_cov)
    assert np.array_equal(one.lag_one_cov, two.lag_one_cov)


def test_permutation_equivariance():
    rng = np.random.default_rng(11)
    n, big_t = 3, 5
    panel, params, jumps = random_instance(rng, n, big_t, p_obs=1.0)
    perm = np.array([2, 0, 1])
    moments = smooth(panel, params, jumps)

    y = panel.dense_prices()
    panel_p = ObservationPanel.from_dense(y[:, perm],
                                          np.ones((big_t, n), dtype=bool))
    params_p = StateParams(drift=params.drift[perm],
                           gamma=params.gamma[np.ix_(perm, perm)],
                           obs_var=params.obs_var[perm],
                           init_mean=params.init_mean[perm],
                           init_cov=params.init_cov[np.ix_(perm, perm)])
    moments_p = smooth(panel_p, params_p, jumps[:, perm])
    assert np.allclose(moments_p.smoothed_mean,
                       moments.smoothed_mean[:, perm], atol=1e-12)


def test_covariances_exactly_symmetric_and_psd():
    rng = np.random.default_rng(3)
    panel, params, jumps = random_instance(rng, 3, 5)
    moments = smooth(panel, params, jumps)
    for arr in (moments.filtered_cov, moments.smoothed_cov):
        for p in arr:
            assert np.max(np.abs(p - p.T)) == 0.0
            assert np.linalg.eigvalsh(p)[0] >= -1e-12 * np.trace(p)


def test_monotone_information():
    rng = np.random.default_rng(5)
    panel, params, jumps = random_instance(rng, 3, 5)
    out = forward_filter(panel, params, jumps)
    for t in range(panel.n_times):
        assert (np.trace(out.filtered_cov[t])
                <= np.trace(out.predicted_cov[t]) + 1e-12)


def test_singular_innovation_raises():
    panel = ObservationPanel.from_records(1, 2, [(1, 1, 0.0), (2, 1, 1.0)])
    params = StateParams(drift=np.zeros(1), gamma=np.zeros((1, 1)),
                         obs_var=np.array([0.0]),
                         init_mean=np.zeros(1), init_cov=np.zeros((1, 1)))
    with pytest.raises(FilterError):
        forward_filter(panel, params)


def test_filtered_posterior_shapes_and_final_lag():
    rng = np.random.default_rng(13)
    panel, params, jumps = random_instance(rng, 2, 5)
    forward = forward_filter(panel, params, jumps)
    approx = filtered_posterior(forward)
    exact = backward_smooth(forward)
    assert approx.lagged_mean.shape == (4, 2)
    # at the final step the one-step-smoothed pair equals the full smoother
    assert np.allclose(approx.lag_one_cov[-1], exact.lag_one_cov[-1])
    assert np.allclose(approx.lagged_mean[-1], exact.smoothed_mean[-2])
    assert np.allclose(approx.lagged_cov[-1], exact.smoothed_cov[-2])
