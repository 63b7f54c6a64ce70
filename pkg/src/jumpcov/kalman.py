"""Forward Kalman filter and backward smoother with partial observations.

Time starts at the state prior: the step-1 prediction is exactly
(init_mean, init_cov), with drift, jumps and process noise entering from
step 2 on.  Missing observation rows are handled by index selection; the
innovation system is solved through a Cholesky factorization and every
emitted covariance is explicitly symmetrized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import ObservationPanel, StateParams


class FilterError(RuntimeError):
    """A covariance required by the recursions was not positive definite."""

    def __init__(self, message: str, t: int):
        super().__init__(f"{message} at t={t}")
        self.t = t


@dataclass(frozen=True, eq=False)
class FilterResult:
    """Forward-pass moments: one row/slice per time step.

    ``gain_selector_last`` is G(T) composed with the final observation
    selector, needed to seed the lag-one covariance recursion;
    ``loglik`` is the prediction-error decomposition of log p(y | params).
    """

    predicted_mean: np.ndarray
    predicted_cov: np.ndarray
    filtered_mean: np.ndarray
    filtered_cov: np.ndarray
    gain_selector_last: np.ndarray
    loglik: float


@dataclass(frozen=True, eq=False)
class SmootherMoments:
    """Posterior moments consumed by the E-step.

    ``lagged_mean``/``lagged_cov`` hold the marginal of X(t-1) used by the
    transition term ending at t.  After a full backward pass they are None
    (the smoothed arrays serve both sides); the filter-only approximation
    fills them with the one-step-smoothed marginals so each transition term
    is a coherent pairwise posterior.
    """

    predicted_mean: np.ndarray
    predicted_cov: np.ndarray
    filtered_mean: np.ndarray
    filtered_cov: np.ndarray
    smoothed_mean: np.ndarray
    smoothed_cov: np.ndarray
    lag_one_cov: np.ndarray  # (T-1, N, N); slice k is Cov(X(k+2), X(k+1) | ...)
    gain_selector_last: np.ndarray
    loglik: float
    lagged_mean: np.ndarray | None = None   # (T-1, N)
    lagged_cov: np.ndarray | None = None    # (T-1, N, N)

    @property
    def n_times(self) -> int:
        return self.smoothed_mean.shape[0]

    def lagged_side(self) -> tuple[np.ndarray, np.ndarray]:
        """Marginals of X(t-1) per transition term, (T-1, ...) arrays."""
        if self.lagged_mean is not None:
            return self.lagged_mean, self.lagged_cov
        return self.smoothed_mean[:-1], self.smoothed_cov[:-1]


def _as_jumps(panel: ObservationPanel, jumps: np.ndarray | None) -> np.ndarray:
    shape = (max(panel.n_times - 1, 0), panel.n_assets)
    if jumps is None:
        return np.zeros(shape)
    jumps = np.asarray(jumps, dtype=np.float64)
    if jumps.shape != shape:
        raise ValueError(f"jumps must have shape {shape}, got {jumps.shape}")
    return np.ascontiguousarray(jumps)


def forward_filter(panel: ObservationPanel, params: StateParams,
                   jumps: np.ndarray | None = None) -> FilterResult:
    jumps = _as_jumps(panel, jumps)
    out = _kernels.filter_pass(
        panel.obs_ptr, panel.obs_asset, panel.obs_price,
        params.init_mean, params.init_cov, params.gamma, params.drift,
        jumps, params.obs_var)
    x_pred, p_pred, x_filt, p_filt, gi_last, loglik, status = out
    if status:
        raise FilterError("singular innovation covariance", int(status))
    return FilterResult(x_pred, p_pred, x_filt, p_filt, gi_last,
                        float(loglik))


def backward_smooth(forward: FilterResult) -> SmootherMoments:
    out = _kernels.smoother_pass(
        forward.predicted_mean, forward.predicted_cov,
        forward.filtered_mean, forward.filtered_cov,
        forward.gain_selector_last)
    x_sm, p_sm, p_lag, _, status = out
    if status:
        raise FilterError("singular predicted covariance", int(status))
    return SmootherMoments(
        forward.predicted_mean, forward.predicted_cov,
        forward.filtered_mean, forward.filtered_cov,
        x_sm, p_sm, p_lag, forward.gain_selector_last, forward.loglik)


def smooth(panel: ObservationPanel, params: StateParams,
           jumps: np.ndarray | None = None) -> SmootherMoments:
    """Forward filter followed by the backward pass."""
    return backward_smooth(forward_filter(panel, params, jumps))


def filtered_posterior(forward: FilterResult) -> SmootherMoments:
    """Treat the filtered moments as the posterior (initialization phase).

    The smoothed slots carry the filtered marginals; the lagged side of each
    transition term carries the one-step-smoothed marginal of X(t-1) given
    y(1:t) together with the matching cross covariance, so the E-step sums
    stay coherent without a full backward pass.
    """
    lag_mean, lag_cov, p_lag, status = _kernels.one_step_smooth(
        forward.predicted_mean, forward.predicted_cov,
        forward.filtered_mean, forward.filtered_cov)
    if status:
        raise FilterError("singular predicted covariance", int(status))
    return SmootherMoments(
        forward.predicted_mean, forward.predicted_cov,
        forward.filtered_mean, forward.filtered_cov,
        forward.filtered_mean.copy(), forward.filtered_cov.copy(),
        p_lag, forward.gain_selector_last, forward.loglik,
        lagged_mean=lag_mean, lagged_cov=lag_cov)
