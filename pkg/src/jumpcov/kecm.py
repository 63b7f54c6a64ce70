"""Shared ECM machinery: E-step sufficient statistics, conditional updates
for drift / process covariance / observation noise, the iteration driver
with its filter-only warmup and covariance-stability stopping rule, and the
no-jump KEM baseline.

Prior bookkeeping note: ``log_posterior`` evaluates each conjugate prior
with the exponent convention under which the closed-form conditional
updates below are exact maximizers (covariance exponent eta, beta exponents
alpha/beta, slab density counted only where the indicator is on).  This
keeps the monotone-ascent diagnostic exact; see the module tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kalman
from ._backend import wall_clock
from ._linalg import spd_solve, symmetrize
from .metrics import InsufficientRefreshBlocksError, refresh_time_covariance
from .model import (Hyperparameters, ObservationPanel, StateParams,
                    default_hyperparameters, default_state_params,
                    validate_panel)
from .report import EstimationReport, TraceRow


@dataclass(frozen=True, eq=False)
class EStepStats:
    """Posterior second-moment sums A, B, C plus the drift-corrected
    smoothed increments used by the jump steps."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    deltas: np.ndarray  # (T-1, N): smoothed increment minus drift

    @property
    def n_steps(self) -> int:
        return self.deltas.shape[0]


@dataclass(frozen=True)
class KecmRunConfig:
    max_iters: int = 500
    rel_tol: float = 1e-3
    filter_only_iters: int = 10
    jump_sweeps: int = 3
    coord_tol: float = 1e-12
    seed: int | None = None

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.filter_only_iters < 0:
            raise ValueError("filter_only_iters must be >= 0")
        if self.max_iters < 1 or self.jump_sweeps < 1:
            raise ValueError("max_iters and jump_sweeps must be >= 1")


def estep_stats(moments: kalman.SmootherMoments, drift: np.ndarray,
                jumps: np.ndarray) -> EStepStats:
    """Second-moment sums of the state posterior.

    A sums lagged second moments, B cross moments against the (drift- and
    jump-corrected) current state, C current second moments; the combination
    A + C - B - B' is the posterior expectation of the summed squared state
    residuals, invariant to shifting all means by a constant.
    """
    xs = moments.smoothed_mean
    ps = moments.smoothed_cov
    lag = moments.lag_one_cov
    lx, lp = moments.lagged_side()
    drift = np.asarray(drift, dtype=np.float64)
    m = xs[1:] - drift - jumps
    a = lp.sum(axis=0) + np.einsum("ti,tj->ij", lx, lx)
    b = lag.sum(axis=0) + np.einsum("ti,tj->ij", m, lx)
    c = ps[1:].sum(axis=0) + np.einsum("ti,tj->ij", m, m)
    deltas = xs[1:] - drift - lx
    return EStepStats(a=a, b=b, c=c, deltas=np.ascontiguousarray(deltas))


def update_drift(moments: kalman.SmootherMoments, jumps: np.ndarray,
                 gamma_prev: np.ndarray, hyper: Hyperparameters) -> np.ndarray:
    """Posterior mode of the drift given the current covariance and jumps."""
    xs = moments.smoothed_mean
    lx, _ = moments.lagged_side()
    n = xs.shape[1]
    tm1 = xs.shape[0] - 1
    incr = (xs[1:] - lx - jumps).sum(axis=0)
    # D = F (d_bar/sigma_d2 + gamma^-1 incr) with
    # F = ((T-1) gamma^-1 + I/sigma_d2)^-1, rearranged to a single SPD solve
    lhs = tm1 * np.eye(n) + gamma_prev / hyper.sigma_d2
    rhs = gamma_prev @ (hyper.d_bar / hyper.sigma_d2) + incr
    return spd_solve(lhs, rhs)


def update_gamma(stats: EStepStats, hyper: Hyperparameters) -> np.ndarray:
    """Conditional update of the process covariance; always SPD because the
    prior scale matrix is."""
    resid = stats.a + stats.c - stats.b - stats.b.T
    return symmetrize((resid + hyper.w_o) / (stats.n_steps + hyper.eta))


def update_obs_var(panel: ObservationPanel, moments: kalman.SmootherMoments,
                   hyper: Hyperparameters) -> np.ndarray:
    """Per-asset conditional update of the observation noise variance."""
    xs = moments.smoothed_mean
    ps = moments.smoothed_cov
    t_idx = np.repeat(np.arange(panel.n_times), np.diff(panel.obs_ptr))
    resid = panel.obs_price - xs[t_idx, panel.obs_asset]
    contrib = resid ** 2 + ps[t_idx, panel.obs_asset, panel.obs_asset]
    total = np.zeros(panel.n_assets)
    np.add.at(total, panel.obs_asset, contrib)
    counts = panel.counts_per_asset()
    return (2.0 * hyper.beta_o + total) / (2.0 * hyper.alpha_o + 2.0 + counts)


def param_log_prior(params: StateParams, hyper: Hyperparameters) -> float:
    """Prior log density of (drift, gamma, obs_var), constants dropped."""
    d = params.drift - hyper.d_bar
    out = -0.5 * float(d @ d) / hyper.sigma_d2
    sign, logdet = np.linalg.slogdet(params.gamma)
    if sign <= 0:
        return -np.inf
    out += -0.5 * hyper.eta * logdet
    out += -0.5 * float(np.trace(spd_solve(params.gamma, hyper.w_o)))
    out += float(np.sum(-(hyper.alpha_o + 1.0) * np.log(params.obs_var)
                        - hyper.beta_o / params.obs_var))
    return out


def log_posterior(panel: ObservationPanel, params: StateParams,
                  hyper: Hyperparameters, jump_state=None) -> float:
    """log p(params, jumps, y) up to a panel-dependent constant.

    The latent states are integrated out through the filter's
    prediction-error decomposition.  Used for monotonicity diagnostics.
    """
    model = _jump_model_for(jump_state)
    jumps = model.jump_matrix(jump_state, panel)
    forward = kalman.forward_filter(panel, params, jumps)
    observed = _jump_observed_mask(panel)
    return (forward.loglik + param_log_prior(params, hyper)
            + model.log_prior(jump_state, hyper, observed))


def _jump_observed_mask(panel: ObservationPanel) -> np.ndarray:
    """(T-1, N) uint8 mask: 1 where the asset is observed at the jump time."""
    return panel.mask()[1:].astype(np.uint8)


class _NoJumpModel:
    """Jumps pinned to zero everywhere (the KEM baseline)."""

    method = "kem"

    def init_state(self, panel, hyper, observed, params0):
        return None

    def jump_matrix(self, state, panel):
        return np.zeros((panel.n_times - 1, panel.n_assets))

    def update(self, state, stats, params_new, hyper, config, observed):
        return None

    def log_prior(self, state, hyper, observed):
        return 0.0


def _jump_model_for(jump_state):
    # local imports keep the module import graph acyclic
    from .laplace import LaplaceJumpModel
    from .model import LaplaceJumpState, SpikeSlabJumpState
    from .spikeslab import SpikeSlabJumpModel

    if jump_state is None:
        return _NoJumpModel()
    if isinstance(jump_state, LaplaceJumpState):
        return LaplaceJumpModel()
    if isinstance(jump_state, SpikeSlabJumpState):
        return SpikeSlabJumpModel()
    raise TypeError(f"unsupported jump state {type(jump_state)!r}")


def initial_gamma(panel: ObservationPanel,
                  hyper: Hyperparameters) -> np.ndarray:
    """Refresh-time sample covariance, falling back to the prior mode when
    the panel has too few complete refresh blocks."""
    try:
        return refresh_time_covariance(panel)
    except InsufficientRefreshBlocksError:
        return hyper.w_o / (hyper.eta + panel.n_assets + 1.0)


def run_ecm(panel: ObservationPanel, hyper: Hyperparameters | None,
            config: KecmRunConfig | None, jump_model,
            gamma0: np.ndarray | None = None) -> EstimationReport:
    """Iterate smoothing and conditional maximization until the covariance
    stabilizes.  Shared by KEM and both KECM variants."""
    t_start = wall_clock()
    config = config or KecmRunConfig()
    hyper = hyper or default_hyperparameters(panel.n_assets)
    hyper.validate(panel.n_assets)
    check = validate_panel(panel)
    if not check.ok:
        raise ValueError("invalid panel: "
                         + "; ".join(i.message for i in check.issues))
    if gamma0 is None:
        gamma0 = initial_gamma(panel, hyper)
    params = default_state_params(panel, hyper, gamma0)
    params.validate()
    observed = _jump_observed_mask(panel)
    state = jump_model.init_state(panel, hyper, observed, params)

    trace: list[TraceRow] = []
    converged = False
    n_done = 0
    for it in range(1, config.max_iters + 1):
        jumps = jump_model.jump_matrix(state, panel)
        forward = kalman.forward_filter(panel, params, jumps)
        if it <= config.filter_only_iters:
            moments = kalman.filtered_posterior(forward)
        else:
            moments = kalman.backward_smooth(forward)
        log_post = (forward.loglik + param_log_prior(params, hyper)
                    + jump_model.log_prior(state, hyper, observed))

        drift_new = update_drift(moments, jumps, params.gamma, hyper)
        stats = estep_stats(moments, drift_new, jumps)
        gamma_new = update_gamma(stats, hyper)
        obs_new = update_obs_var(panel, moments, hyper)
        params_new = params.replace(drift=drift_new, gamma=gamma_new,
                                    obs_var=obs_new)
        state = jump_model.update(state, stats, params_new, hyper, config,
                                  observed)

        rel_change = (np.linalg.norm(gamma_new - params.gamma)
                      / np.linalg.norm(params.gamma))
        trace.append(TraceRow(it, log_post, float(rel_change),
                              wall_clock() - t_start))
        params = params_new
        n_done = it
        if (it >= max(config.filter_only_iters + 2, 2)
                and rel_change < config.rel_tol):
            converged = True
            break

    final_lp = (kalman.forward_filter(
        panel, params, jump_model.jump_matrix(state, panel)).loglik
        + param_log_prior(params, hyper)
        + jump_model.log_prior(state, hyper, observed))
    return EstimationReport(
        method=jump_model.method,
        gamma=params.gamma.copy(),
        params=params,
        jump_state=state,
        n_iterations=n_done,
        converged=converged,
        final_log_posterior=final_lp,
        wall_time_sec=wall_clock() - t_start,
        trace=trace,
    )


def run_kem(panel: ObservationPanel, hyper: Hyperparameters | None = None,
            config: KecmRunConfig | None = None,
            gamma0: np.ndarray | None = None) -> EstimationReport:
    """KECM with jumps pinned to zero: the no-jump Kalman-EM baseline."""
    return run_ecm(panel, hyper, config, _NoJumpModel(), gamma0)
