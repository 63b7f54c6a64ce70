"""Gibbs sampler over (missing prices, latent states, jumps, drift,
covariance, noise variances, jump hyperparameters) with a Rao-Blackwellized
posterior-mean covariance estimate.

One chain is strictly sequential; every random draw comes from a single
numpy Generator in a fixed order, so a seed pins the chain bit-for-bit.
The per-time single-site state updates share one conditional covariance for
all interior times, so each sweep factorizes exactly three precisions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels, kalman
from ._backend import wall_clock
from ._linalg import conditional_weights, spd_inverse, symmetrize
from .model import (Hyperparameters, ObservationPanel, SpikeSlabJumpState,
                    StateParams, default_hyperparameters, validate_panel)
from .report import EstimationReport


@dataclass(frozen=True)
class GibbsConfig:
    n_samples: int = 10_000
    burn_in: int = 2_000
    jump_sweeps: int = 3
    seed: int | None = None

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_samples:
            raise ValueError("need 0 <= burn_in < n_samples")
        if self.jump_sweeps < 1:
            raise ValueError("jump_sweeps must be >= 1")


@dataclass
class GibbsChain:
    """Kept covariance samples, their conditional means, and scalar traces."""

    gamma_samples: np.ndarray      # (kept, N, N)
    gamma_cond_means: np.ndarray   # (kept, N, N)
    zeta_trace: np.ndarray         # (n_samples,)
    logdens_trace: np.ndarray      # (n_samples,)
    gamma_trace: np.ndarray        # (n_samples,) trace of each Gamma sample
    rao_blackwell: bool = True


def sample_missing_obs(x: np.ndarray, obs_var: np.ndarray,
                       panel: ObservationPanel,
                       rng: np.random.Generator) -> np.ndarray:
    """Complete the price panel: observed entries copied, missing entries
    drawn from their observation distribution around the current states."""
    mask = panel.mask()
    y_tot = panel.dense_prices(0.0)
    miss_t, miss_a = np.nonzero(~mask)
    draws = rng.standard_normal(miss_t.size)
    y_tot[miss_t, miss_a] = (x[miss_t, miss_a]
                             + np.sqrt(obs_var[miss_a]) * draws)
    return y_tot


def state_conditional(gamma: np.ndarray, obs_var: np.ndarray,
                      y_t: np.ndarray, x_prev: np.ndarray | None,
                      x_next: np.ndarray | None, drift: np.ndarray,
                      jump_in: np.ndarray | None,
                      jump_out: np.ndarray | None,
                      init_mean: np.ndarray | None = None,
                      init_cov: np.ndarray | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of one single-site state draw (reference form).

    The sweep kernel implements the same algebra; this closed form is the
    documentation / testing surface.  Pass ``x_prev=None`` for the first
    step (the prior takes over) and ``x_next=None`` for the last.
    """
    n = gamma.shape[0]
    prec = np.diag(1.0 / obs_var)
    rhs = y_t / obs_var
    gamma_inv = spd_inverse(gamma)
    if x_prev is None:
        kinv = spd_inverse(init_cov)
        prec = prec + kinv
        rhs = rhs + kinv @ init_mean
    else:
        prec = prec + gamma_inv
        rhs = rhs + gamma_inv @ (x_prev + drift + jump_in)
    if x_next is not None:
        prec = prec + gamma_inv
        rhs = rhs + gamma_inv @ (x_next - drift - jump_out)
    cov = spd_inverse(prec)
    return cov @ rhs, cov


def _state_precisions(params: StateParams) -> tuple[np.ndarray, ...]:
    """Cholesky factors of the first / interior / last conditional precisions."""
    gamma_inv = spd_inverse(params.gamma)
    obs_prec = 1.0 / params.obs_var
    kinv = spd_inverse(params.init_cov)
    prec_first = symmetrize(kinv + gamma_inv + np.diag(obs_prec))
    prec_mid = symmetrize(2.0 * gamma_inv + np.diag(obs_prec))
    prec_last = symmetrize(gamma_inv + np.diag(obs_prec))
    return (gamma_inv, obs_prec, kinv @ params.init_mean,
            np.linalg.cholesky(prec_first), np.linalg.cholesky(prec_mid),
            np.linalg.cholesky(prec_last))


def sample_states(y_tot: np.ndarray, params: StateParams, jumps: np.ndarray,
                  x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One single-site sweep over t = 1..T; returns the updated state path."""
    gamma_inv, obs_prec, kinv_mu, low1, lowm, lowt = \
        _state_precisions(params)
    x = np.array(x, dtype=np.float64)
    noise = rng.standard_normal(x.shape)
    _kernels.gibbs_state_sweep(x, y_tot, gamma_inv, obs_prec, params.drift,
                               np.ascontiguousarray(jumps), kinv_mu,
                               low1, lowm, lowt, noise)
    return x


def sample_jumps(x: np.ndarray, params: StateParams, zeta: float,
                 sigma_j2: np.ndarray, observed: np.ndarray,
                 indicator: np.ndarray, jumps: np.ndarray, sweeps: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sequential single-site jump draws, ``sweeps`` passes per time step."""
    weights, b2 = conditional_weights(params.gamma)
    tm1, n = jumps.shape
    unif = rng.random((tm1, sweeps, n))
    norm = rng.standard_normal((tm1, sweeps, n))
    indicator = np.array(indicator, dtype=np.int8)
    jumps = np.array(jumps, dtype=np.float64)
    _kernels.gibbs_jump_sweep(x, params.drift, weights, b2, float(zeta),
                              np.ascontiguousarray(sigma_j2),
                              np.ascontiguousarray(observed),
                              indicator, jumps, unif, norm)
    return indicator, jumps


def sample_inverse_wishart(scale: np.ndarray, dof: float,
                           rng: np.random.Generator) -> np.ndarray:
    """Inverse-Wishart draw via the Bartlett factorization (chi-square
    diagonal first, then the subdiagonal normals; bit-exact per seed)."""
    n = scale.shape[0]
    chi = rng.chisquare(dof - np.arange(n))
    off = rng.standard_normal(n * (n - 1) // 2)
    bart = np.zeros((n, n))
    np.fill_diagonal(bart, np.sqrt(chi))
    if n > 1:
        bart[np.tril_indices(n, -1)] = off
    chol_scale = np.linalg.cholesky(symmetrize(scale))
    half = chol_scale @ scipy.linalg.solve_triangular(
        bart, np.eye(n), lower=True).T
    return symmetrize(half @ half.T)


def sample_conjugates(x: np.ndarray, jumps: np.ndarray,
                      indicator: np.ndarray, y_tot: np.ndarray,
                      params: StateParams, hyper: Hyperparameters,
                      rng: np.random.Generator
                      ) -> tuple[StateParams, float, np.ndarray, np.ndarray]:
    """Draw (drift, gamma, obs_var, zeta, sigma_j2) from their conditionals.

    Returns the updated parameter block, the zeta draw, the sigma_j2 draws,
    and the residual scatter matrix used for the covariance draw (the
    Rao-Blackwell ingredient).
    """
    tm1, n = jumps.shape
    gamma_inv = spd_inverse(params.gamma)
    prec_d = symmetrize(tm1 * gamma_inv + np.eye(n) / hyper.sigma_d2)
    cov_d = spd_inverse(prec_d)
    incr = (x[1:] - x[:-1] - jumps).sum(axis=0)
    mean_d = cov_d @ (hyper.d_bar / hyper.sigma_d2 + gamma_inv @ incr)
    drift = mean_d + np.linalg.cholesky(cov_d) @ rng.standard_normal(n)

    resid = x[1:] - x[:-1] - drift - jumps
    scatter = resid.T @ resid
    scale = symmetrize(hyper.w_o + scatter)
    try:
        gamma = sample_inverse_wishart(scale, hyper.eta + tm1, rng)
    except np.linalg.LinAlgError:
        scale = symmetrize(scale)
        gamma = sample_inverse_wishart(scale, hyper.eta + tm1, rng)

    obs_resid_sq = ((y_tot - x) ** 2).sum(axis=0)
    big_t = x.shape[0]
    obs_var = 1.0 / rng.gamma(hyper.alpha_o + 0.5 * big_t,
                              1.0 / (hyper.beta_o + 0.5 * obs_resid_sq))

    n_jump = int(indicator.sum())
    n_zero = indicator.size - n_jump
    # beta draws with a tiny second parameter can round to exactly 1.0,
    # which would pin the jump probability at zero for good
    zeta = float(np.clip(rng.beta(hyper.alpha_zeta + n_zero,
                                  hyper.beta_zeta + n_jump),
                         1e-12, 1.0 - 1e-12))
    sigma_j2 = 1.0 / rng.gamma(hyper.alpha_j + 0.5 * indicator,
                               1.0 / (hyper.beta_j + 0.5 * jumps ** 2))

    new_params = params.replace(drift=drift, gamma=gamma, obs_var=obs_var)
    return new_params, zeta, sigma_j2, scatter


def complete_data_logdens(x, y_tot, jumps, indicator,
                          params: StateParams, zeta: float,
                          sigma_j2: np.ndarray,
                          hyper: Hyperparameters) -> float:
    """Joint log density of the completed data and parameters, up to a
    constant; the chain trace diagnostic."""
    big_t, n = x.shape
    resid = x[1:] - x[:-1] - params.drift - jumps
    gamma_inv = spd_inverse(params.gamma)
    sign, logdet = np.linalg.slogdet(params.gamma)
    out = -0.5 * (big_t - 1) * logdet
    out -= 0.5 * float(np.einsum("ti,ij,tj->", resid, gamma_inv, resid))
    obs_resid = y_tot - x
    out -= 0.5 * big_t * float(np.sum(np.log(params.obs_var)))
    out -= 0.5 * float(np.sum(obs_resid ** 2 / params.obs_var))
    kinv = spd_inverse(params.init_cov)
    d0 = x[0] - params.init_mean
    out -= 0.5 * float(d0 @ kinv @ d0)
    d = params.drift - hyper.d_bar
    out -= 0.5 * float(d @ d) / hyper.sigma_d2
    out += -0.5 * hyper.eta * logdet
    out -= 0.5 * float(np.trace(gamma_inv @ hyper.w_o))
    out += float(np.sum(-(hyper.alpha_o + 1.0) * np.log(params.obs_var)
                        - hyper.beta_o / params.obs_var))
    z = indicator.astype(bool)
    n_on = int(z.sum())
    out += (indicator.size - n_on) * np.log(zeta) + n_on * np.log(1.0 - zeta)
    sv_on = sigma_j2[z]
    out += float(np.sum(-0.5 * np.log(sv_on)
                        - jumps[z] ** 2 / (2.0 * sv_on)))
    out += (hyper.alpha_zeta * np.log(zeta)
            + hyper.beta_zeta * np.log(1.0 - zeta))
    out += float(np.sum(-(hyper.alpha_j + 1.0) * np.log(sigma_j2)
                        - hyper.beta_j / sigma_j2))
    return out


def run_gibbs(panel: ObservationPanel, hyper: Hyperparameters | None = None,
              config: GibbsConfig | None = None,
              init: EstimationReport | None = None
              ) -> tuple[EstimationReport, GibbsChain]:
    """Run the full sampler, seeded from a KECM spike-and-slab report.

    The posterior-mean covariance is the average of the conditional means
    (inverse-Wishart mean given the rest of the state) over kept sweeps;
    when the degrees of freedom are too small for that mean to exist, the
    raw sample average is used and flagged.
    """
    t_start = wall_clock()
    config = config or GibbsConfig()
    hyper = hyper or default_hyperparameters(panel.n_assets)
    hyper.validate(panel.n_assets)
    check = validate_panel(panel)
    if not check.ok:
        raise ValueError("invalid panel: "
                         + "; ".join(i.message for i in check.issues))
    if init is None:
        from .spikeslab import run_kecm_spikeslab
        init = run_kecm_spikeslab(panel, hyper)

    rng = np.random.default_rng(config.seed)
    params = init.params
    if isinstance(init.jump_state, SpikeSlabJumpState):
        indicator = np.array(init.jump_state.indicator, dtype=np.int8)
        jumps = np.ascontiguousarray(init.jump_state.jumps)
        zeta = float(init.jump_state.spike_prob)
        sigma_j2 = np.array(init.jump_state.slab_var)
    else:
        shape = (panel.n_times - 1, panel.n_assets)
        indicator = np.zeros(shape, dtype=np.int8)
        jumps = np.zeros(shape)
        zeta = hyper.alpha_zeta / (hyper.alpha_zeta + hyper.beta_zeta)
        sigma_j2 = np.full(shape, hyper.beta_j / (hyper.alpha_j + 1.0))
    x = kalman.smooth(panel, params, jumps).smoothed_mean.copy()
    observed = panel.mask()[1:].astype(np.uint8)

    n = panel.n_assets
    tm1 = panel.n_times - 1
    rb_dof = hyper.eta + tm1 - n - 1.0
    rao_blackwell = rb_dof > 0
    kept = config.n_samples - config.burn_in
    chain = GibbsChain(
        gamma_samples=np.empty((kept, n, n)),
        gamma_cond_means=np.empty((kept, n, n)),
        zeta_trace=np.empty(config.n_samples),
        logdens_trace=np.empty(config.n_samples),
        gamma_trace=np.empty(config.n_samples),
        rao_blackwell=rao_blackwell,
    )

    for sweep in range(config.n_samples):
        y_tot = sample_missing_obs(x, params.obs_var, panel, rng)
        x = sample_states(y_tot, params, jumps, x, rng)
        indicator, jumps = sample_jumps(x, params, zeta, sigma_j2, observed,
                                        indicator, jumps,
                                        config.jump_sweeps, rng)
        params, zeta, sigma_j2, scatter = sample_conjugates(
            x, jumps, indicator, y_tot, params, hyper, rng)
        if not (np.isfinite(params.gamma).all()
                and np.isfinite(x).all() and np.isfinite(jumps).all()):
            raise RuntimeError(f"non-finite sampler state at sweep {sweep + 1}")
        chain.zeta_trace[sweep] = zeta
        chain.gamma_trace[sweep] = float(np.trace(params.gamma))
        chain.logdens_trace[sweep] = complete_data_logdens(
            x, y_tot, jumps, indicator, params, zeta, sigma_j2, hyper)
        k = sweep - config.burn_in
        if k >= 0:
            chain.gamma_samples[k] = params.gamma
            chain.gamma_cond_means[k] = (
                symmetrize(hyper.w_o + scatter) / rb_dof if rao_blackwell
                else params.gamma)

    gamma_hat = (chain.gamma_cond_means if rao_blackwell
                 else chain.gamma_samples).mean(axis=0)
    report = EstimationReport(
        method="gibbs",
        gamma=symmetrize(gamma_hat),
        params=params,
        jump_state=SpikeSlabJumpState(indicator=indicator, slab=jumps,
                                      spike_prob=zeta, slab_var=sigma_j2),
        n_iterations=config.n_samples,
        converged=True,
        final_log_posterior=float(chain.logdens_trace[-1]),
        wall_time_sec=wall_clock() - t_start,
        extra={"burn_in": config.burn_in, "rao_blackwell": rao_blackwell,
               "init_method": init.method},
    )
    return report, chain
