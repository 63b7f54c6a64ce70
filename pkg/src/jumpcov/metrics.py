"""Evaluation metrics and the refresh-time baseline covariance estimator."""

from __future__ import annotations

import numpy as np

from ._linalg import min_eigenvalue, spd_solve, symmetrize
from .model import ObservationPanel


class InsufficientRefreshBlocksError(ValueError):
    """Fewer than two complete refresh blocks in the panel."""


def min_variance_portfolio(gamma_hat: np.ndarray) -> np.ndarray:
    """Weights minimizing w' G w subject to sum(w) = 1 (closed form)."""
    ones = np.ones(gamma_hat.shape[0])
    raw = spd_solve(np.asarray(gamma_hat, dtype=np.float64), ones)
    return raw / raw.sum()


def portfolio_variance(weights: np.ndarray, gamma_true: np.ndarray) -> float:
    weights = np.asarray(weights, dtype=np.float64)
    return float(weights @ np.asarray(gamma_true, dtype=np.float64) @ weights)


def rel_frobenius(gamma_hat: np.ndarray, gamma_true: np.ndarray) -> float:
    """Frobenius norm of the error relative to the truth's norm."""
    gamma_hat = np.asarray(gamma_hat, dtype=np.float64)
    gamma_true = np.asarray(gamma_true, dtype=np.float64)
    return float(np.linalg.norm(gamma_hat - gamma_true)
                 / np.linalg.norm(gamma_true))


def refresh_times(panel: ObservationPanel) -> np.ndarray:
    """1-based times at which every asset has traded since the previous one."""
    seen = np.zeros(panel.n_assets, dtype=bool)
    out = []
    for t in range(1, panel.n_times + 1):
        assets, _ = panel.observations_at(t)
        seen[assets] = True
        if seen.all():
            out.append(t)
            seen[:] = False
    return np.array(out, dtype=np.int64)


def refresh_time_covariance(panel: ObservationPanel,
                            ridge: float = 1e-10) -> np.ndarray:
    """Sample covariance of refresh-time synchronized returns.

    Each asset's latest observation is carried to the refresh block end; the
    covariance of consecutive synchronized differences is rescaled to the
    unit grid by the mean block length.  A ridge proportional to the trace
    is added if the result is not positive definite (the KECM drivers need a
    PD initial covariance).
    """
    times = refresh_times(panel)
    if times.size < 3:
        raise InsufficientRefreshBlocksError(
            f"need >= 2 refresh blocks, found {max(times.size - 1, 0)}")
    last_price = np.zeros(panel.n_assets)
    have = np.zeros(panel.n_assets, dtype=bool)
    synced = np.empty((times.size, panel.n_assets))
    k = 0
    for t in range(1, panel.n_times + 1):
        assets, prices = panel.observations_at(t)
        # keep the latest print per asset within the time stamp
        last_price[assets] = prices
        have[assets] = True
        if k < times.size and t == times[k]:
            if not have.all():
                raise InsufficientRefreshBlocksError(
                    "internal refresh bookkeeping failed")
            synced[k] = last_price
            k += 1
    diffs = np.diff(synced, axis=0)
    mean_block = float(np.diff(times).mean())
    cov = np.cov(diffs, rowvar=False, ddof=1) / mean_block
    cov = symmetrize(np.atleast_2d(cov))
    lo = min_eigenvalue(cov)
    bump = ridge * np.trace(cov) / cov.shape[0]
    if lo <= bump:
        cov = cov + (bump + max(-lo, 0.0)) * np.eye(cov.shape[0])
    return cov
