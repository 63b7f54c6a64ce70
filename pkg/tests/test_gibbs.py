import numpy as np
import pytest
from scipy.stats import norm

import jumpcov
from jumpcov.gibbs import (GibbsConfig, run_gibbs, sample_conjugates,
                           sample_inverse_wishart, sample_jumps,
                           sample_missing_obs, sample_states,
                           state_conditional)
from jumpcov.model import (Hyperparameters, ObservationPanel, StateParams,
                           default_hyperparameters, default_state_params)
from jumpcov.simulate import SimConfig, simulate_dataset

from oracles import joint_gaussian_moments, random_instance, random_spd


def small_params(n, gamma_scale=1.0):
    return StateParams(drift=np.zeros(n), gamma=np.eye(n) * gamma_scale,
                       obs_var=np.ones(n), init_mean=np.zeros(n),
                       init_cov=np.eye(n))


def test_sample_missing_copies_and_centers():
    rng = np.random.default_rng(0)
    panel = ObservationPanel.from_records(
        2, 3, [(1, 1, 5.0), (1, 2, 6.0), (2, 2, 6.5), (3, 1, 5.5),
               (3, 2, 7.0)])
    x = np.arange(6.0).reshape(3, 2)
    y = sample_missing_obs(x, np.full(2, 1e-32), panel, rng)
    # observed entries bit-identical, missing entry collapses onto x
    assert y[0, 0] == 5.0 and y[0, 1] == 6.0 and y[2, 1] == 7.0
    assert y[1, 0] == pytest.approx(x[1, 0], abs=1e-12)

    draws = np.array([sample_missing_obs(x, np.ones(2), panel,
                                         rng)[1, 0]
                      for _ in range(100_000)])
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - x[1, 0]) < 4 * se


def test_state_conditional_hand_example():
    # interior site, all variances 1: precision 3, mean pulled to the
    # average of the neighbor predictions and the observation
    mean, cov = state_conditional(
        gamma=np.eye(1), obs_var=np.ones(1), y_t=np.array([3.0]),
        x_prev=np.array([0.0]), x_next=np.array([0.0]),
        drift=np.zeros(1), jump_in=np.zeros(1), jump_out=np.zeros(1))
    assert cov[0, 0] == pytest.approx(1.0 / 3.0)
    assert mean[0] == pytest.approx(1.0)


def test_interior_conditional_covariance_shared_across_times():
    # the interior single-site covariance does not depend on t, so one
    # factorization serves every 1 < t < T (three factorizations total)
    rng = np.random.default_rng(40)
    n = 3
    gamma = random_spd(rng, n)
    params = StateParams(drift=rng.standard_normal(n), gamma=gamma,
                         obs_var=0.5 + rng.random(n),
                         init_mean=np.zeros(n), init_cov=np.eye(n))
    covs = []
    for _ in range(2):
        _, cov = state_conditional(
            gamma, params.obs_var, rng.standard_normal(n),
            rng.standard_normal(n), rng.standard_normal(n), params.drift,
            rng.standard_normal(n), rng.standard_normal(n))
        covs.append(cov)
    assert np.allclose(covs[0], covs[1])
    from jumpcov.gibbs import _state_precisions
    factors = _state_precisions(params)
    assert len(factors) == 6  # 3 precomputed quantities + 3 Cholesky factors


def test_state_sweep_longrun_matches_smoother():
    rng = np.random.default_rng(1)
    panel, params, jumps = random_instance(rng, 2, 3, p_obs=1.0,
                                           with_jumps=False)
    y_tot = panel.dense_prices()
    moments = jumpcov.smooth(panel, params, jumps)
    x = moments.smoothed_mean.copy()
    total = np.zeros_like(x)
    n_sweeps = 20_000
    for _ in range(n_sweeps):
        x = sample_states(y_tot, params, jumps, x, rng)
        total += x
    avg = total / n_sweeps
    # MC error of a correlated chain: allow 4 standard errors with an
    # inflation factor for autocorrelation
    se = np.sqrt(np.diagonal(moments.smoothed_cov, axis1=1, axis2=2)
                 / n_sweeps) * 5
    assert np.all(np.abs(avg - moments.smoothed_mean) < 4 * se + 1e-3)


def test_jump_site_probability_matches_density_ratio():
    rng = np.random.default_rng(2)
    params = small_params(1, gamma_scale=1e-4)
    x = np.array([[0.0], [0.0]])  # conditional mean a = 0
    zeta, s2 = 0.999, 1e-4
    n_draws = 100_000
    hits = 0
    observed = np.ones((1, 1), dtype=np.uint8)
    for _ in range(n_draws):
        ind, _ = sample_jumps(x, params, zeta, np.full((1, 1), s2),
                              observed, np.zeros((1, 1), dtype=np.int8),
                              np.zeros((1, 1)), 1, rng)
        hits += int(ind[0, 0] == 0)
    p0 = (zeta * norm.pdf(0, 0, np.sqrt(1e-4))
          / (zeta * norm.pdf(0, 0, np.sqrt(1e-4))
             + (1 - zeta) * norm.pdf(0, 0, np.sqrt(2e-4))))
    assert p0 == pytest.approx(0.99929, abs=1e-5)
    se = np.sqrt(p0 * (1 - p0) / n_draws)
    assert abs(hits / n_draws - p0) < 4 * se


def test_jump_slab_draw_variance_shrinks_with_slab():
    rng = np.random.default_rng(3)
    params = small_params(1, gamma_scale=1e-4)
    x = np.array([[0.0], [0.05]])  # strong evidence of a jump
    observed = np.ones((1, 1), dtype=np.uint8)
    for s2 in (1e-4, 1e-8):
        vals = []
        for _ in range(4000):
            ind, j = sample_jumps(x, params, 0.5, np.full((1, 1), s2),
                                  observed, np.zeros((1, 1), dtype=np.int8),
                                  np.zeros((1, 1)), 1, rng)
            if ind[0, 0]:
                vals.append(j[0, 0])
        b2 = 1e-4
        want_var = b2 * s2 / (b2 + s2)
        got_var = np.var(vals, ddof=1)
        assert got_var == pytest.approx(want_var, rel=0.2)


def test_jump_pattern_probabilities_match_enumeration():
    # two correlated assets, one site resampled repeatedly: empirical
    # indicator frequencies against the enumerated conditional
    rng = np.random.default_rng(4)
    gamma = 1e-4 * np.array([[1.0, 0.6], [0.6, 1.0]])
    params = StateParams(drift=np.zeros(2), gamma=gamma,
                         obs_var=np.ones(2), init_mean=np.zeros(2),
                         init_cov=np.eye(2))
    x = np.array([[0.0, 0.0], [0.02, 0.005]])
    zeta, s2 = 0.99, 1e-3
    observed = np.ones((1, 2), dtype=np.uint8)
    sig = np.full((1, 2), s2)

    # freeze coordinate 2 at zero, resample coordinate 1 via full sweeps of
    # a single site by running one sweep and reading only site 1 stats
    counts = 0
    n_draws = 100_000
    from jumpcov._linalg import conditional_weights
    w, b2 = conditional_weights(gamma)
    v = x[1] - x[0]
    a1 = v[0] + w[0, 1] * (0.0 - v[1])
    p1_num = (1 - zeta) * norm.pdf(0, a1, np.sqrt(b2[0] + s2))
    p1 = p1_num / (p1_num + zeta * norm.pdf(0, a1, np.sqrt(b2[0])))
    for _ in range(n_draws):
        ind, j = sample_jumps(x, params, zeta, sig, observed,
                              np.zeros((1, 2), dtype=np.int8),
                              np.zeros((1, 2)), 1, rng)
        counts += int(ind[0, 0])
        # the first site is drawn conditioned on j2 = 0 (warm start zero)
    se = np.sqrt(p1 * (1 - p1) / n_draws)
    assert abs(counts / n_draws - p1) < 4 * se


def test_inverse_wishart_mean():
    rng = np.random.default_rng(5)
    scale = np.array([[2.0, 0.3], [0.3, 1.0]])
    dof = 8.0
    draws = np.stack([sample_inverse_wishart(scale, dof, rng)
                      for _ in range(100_000)])
    want = scale / (dof - 2 - 1)
    got = draws.mean(axis=0)
    se = draws.std(axis=0) / np.sqrt(draws.shape[0])
    assert np.all(np.abs(got - want) < 4 * se)


def test_conjugate_gamma_matches_analytic_posterior_mean():
    # zero residuals, T=2: the covariance draw reduces to the prior
    rng = np.random.default_rng(6)
    n = 2
    # dogmatic zero-drift prior so the residuals stay exactly zero after
    # the internal drift draw
    hyper = Hyperparameters.from_dict({"sigma_d2": 1e-30}, n)
    params = small_params(n, gamma_scale=1e-8)
    x = np.zeros((2, n))
    y = np.zeros((2, n))
    jumps = np.zeros((1, n))
    ind = np.zeros((1, n), dtype=np.int8)
    draws = []
    for _ in range(100_000):
        new_params, _, _, _ = sample_conjugates(x, jumps, ind, y, params,
                                                hyper, rng)
        draws.append(new_params.gamma)
    draws = np.stack(draws)
    want = hyper.w_o / (hyper.eta + 1 - n - 1)
    se = draws.std(axis=0) / np.sqrt(draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - want) < 4 * se)


def test_conjugate_zeta_and_slab_priors():
    rng = np.random.default_rng(7)
    hyper = default_hyperparameters(2)
    params = small_params(2)
    x = np.zeros((3, 2))
    y = np.zeros((3, 2))
    jumps = np.zeros((2, 2))
    ind = np.zeros((2, 2), dtype=np.int8)
    zs, sjs = [], []
    for _ in range(50_000):
        _, zeta, sj, _ = sample_conjugates(x, jumps, ind, y, params,
                                           hyper, rng)
        zs.append(zeta)
        sjs.append(sj[0, 0])
    zs = np.array(zs)
    # N_Z = 4, N_J = 0 with defaults: Beta(13.95, 0.05), mean 13.95/14
    want = 13.95 / 14.0
    assert abs(zs.mean() - want) < 4 * zs.std() / np.sqrt(zs.size)
    # slab variances with no jumps reproduce the prior IG(alpha_j, beta_j)
    sjs = np.array(sjs)
    want_mean = hyper.beta_j / (hyper.alpha_j - 1)
    assert abs(sjs.mean() - want_mean) < 4 * sjs.std() / np.sqrt(sjs.size)


def test_run_gibbs_reproducible_and_spd():
    data = simulate_dataset(SimConfig(n_assets=3, n_times=120, zeta=0.999,
                                      sigma_j2=1e-4), seed=9)
    cfg = GibbsConfig(n_samples=80, burn_in=20, seed=11)
    init = jumpcov.run_kecm_spikeslab(data.panel)
    rep1, chain1 = run_gibbs(data.panel, config=cfg, init=init)
    rep2, chain2 = run_gibbs(data.panel, config=cfg, init=init)
    assert np.array_equal(chain1.gamma_samples, chain2.gamma_samples)
    assert np.array_equal(rep1.gamma, rep2.gamma)
    for g in chain1.gamma_samples:
        assert np.linalg.eigvalsh(g)[0] > 0
    assert np.all((chain1.zeta_trace > 0) & (chain1.zeta_trace < 1))
    assert chain1.gamma_samples.shape[0] == 60
    assert np.all(rep1.params.obs_var > 0)
    assert np.all(rep1.jump_state.slab_var > 0)


def test_run_gibbs_close_to_kem_on_clean_data():
    ratios = []
    for seed in range(5):
        data = simulate_dataset(SimConfig(n_assets=3, n_times=500,
                                          zeta=1.0), seed=70 + seed)
        kem_err = jumpcov.rel_frobenius(
            jumpcov.run_kem(data.panel).gamma, data.truth.gamma)
        rep, _ = run_gibbs(data.panel,
                           config=GibbsConfig(n_samples=2500, burn_in=500,
                                              seed=seed))
        gibbs_err = jumpcov.rel_frobenius(rep.gamma, data.truth.gamma)
        ratios.append(gibbs_err / kem_err)
    assert np.median(ratios) < 2.0


def test_rao_blackwell_reduces_variance():
    data = simulate_dataset(SimConfig(n_assets=2, n_times=80, zeta=1.0),
                            seed=21)
    init = jumpcov.run_kecm_spikeslab(data.panel)
    raw_means, rb_means = [], []
    for chain_seed in range(20):
        cfg = GibbsConfig(n_samples=400, burn_in=100, seed=chain_seed)
        _, chain = run_gibbs(data.panel, config=cfg, init=init)
        raw_means.append(chain.gamma_samples.mean(axis=0))
        rb_means.append(chain.gamma_cond_means.mean(axis=0))
    var_raw = np.var(np.stack(raw_means), axis=0)
    var_rb = np.var(np.stack(rb_means), axis=0)
    assert np.median(var_rb / var_raw) < 1.0


def test_run_gibbs_small_dof_falls_back_to_raw_average():
    panel = ObservationPanel.from_records(
        2, 2, [(1, 1, 0.0), (1, 2, 0.0), (2, 1, 0.01), (2, 2, 0.02)])
    hyper = Hyperparameters.from_dict({"eta": 1.5}, 2)
    rep, chain = run_gibbs(panel, hyper=hyper,
                           config=GibbsConfig(n_samples=30, burn_in=5,
                                              seed=1))
    assert not chain.rao_blackwell
    assert rep.extra["rao_blackwell"] is False
