"""Brute-force oracles shared by the test modules.

The joint-Gaussian oracle builds the full covariance of (X(1:T), Y_obs) for
the linear state-space model and conditions directly, independent of the
recursive implementation it checks.
"""

from __future__ import annotations

import numpy as np

from jumpcov.model import ObservationPanel, StateParams


def joint_gaussian_moments(panel: ObservationPanel, params: StateParams,
                           jumps: np.ndarray | None = None):
    """Exact posterior of the state path by direct conditioning.

    Returns (means (T, N), marginal covs (T, N, N), lag-one covs
    (T-1, N, N), log-likelihood of the observations).
    """
    big_t, n = panel.n_times, panel.n_assets
    if jumps is None:
        jumps = np.zeros((big_t - 1, n))
    mean_x = np.empty((big_t, n))
    mean_x[0] = params.init_mean
    for t in range(1, big_t):
        mean_x[t] = mean_x[t - 1] + params.drift + jumps[t - 1]

    # Cov(X(t), X(s)) = K + min(t, s) * Gamma (0-based steps)
    cov_x = np.empty((big_t * n, big_t * n))
    for t in range(big_t):
        for s in range(big_t):
            cov_x[t * n:(t + 1) * n, s * n:(s + 1) * n] = (
                params.init_cov + min(t, s) * params.gamma)

    obs = [(t, int(a)) for t in range(big_t)
           for a in panel.observations_at(t + 1)[0]]
    y = np.concatenate([panel.observations_at(t + 1)[1]
                        for t in range(big_t)])
    m = len(obs)
    sel = np.array([t * n + a for t, a in obs], dtype=int)
    cov_xy = cov_x[:, sel]
    cov_yy = cov_x[np.ix_(sel, sel)] + np.diag(
        [params.obs_var[a] for _, a in obs])
    mean_y = mean_x.ravel()[sel]

    sol = np.linalg.solve(cov_yy, y - mean_y)
    post_mean = (mean_x.ravel() + cov_xy @ sol).reshape(big_t, n)
    gain = np.linalg.solve(cov_yy, cov_xy.T)
    post_cov_full = cov_x - cov_xy @ gain

    marg = np.empty((big_t, n, n))
    lag = np.empty((big_t - 1, n, n))
    for t in range(big_t):
        marg[t] = post_cov_full[t * n:(t + 1) * n, t * n:(t + 1) * n]
    for t in range(1, big_t):
        lag[t - 1] = post_cov_full[t * n:(t + 1) * n,
                                   (t - 1) * n:t * n]

    sign, logdet = np.linalg.slogdet(cov_yy)
    resid = y - mean_y
    loglik = -0.5 * (m * np.log(2.0 * np.pi) + logdet
                     + resid @ np.linalg.solve(cov_yy, resid))
    return post_mean, marg, lag, float(loglik)


def random_spd(rng: np.random.Generator, n: int, scale: float = 1.0
               ) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n))


def random_instance(rng: np.random.Generator, n: int, big_t: int,
                    p_obs: float = 0.7, scale: float = 1.0,
                    with_jumps: bool = True):
    """Random panel/params/jumps triple for oracle comparisons.

    Coverage invariants are NOT enforced: the oracle handles any mask and
    the recursions must too.
    """
    params = StateParams(
        drift=scale * rng.standard_normal(n) * 0.1,
        gamma=random_spd(rng, n, scale),
        obs_var=scale * (0.2 + rng.random(n)),
        init_mean=rng.standard_normal(n),
        init_cov=random_spd(rng, n, scale),
    )
    jumps = (rng.standard_normal((big_t - 1, n)) * scale
             * rng.binomial(1, 0.3, size=(big_t - 1, n))
             if with_jumps else np.zeros((big_t - 1, n)))
    mask = rng.random((big_t, n)) < p_obs
    if not mask.any():
        mask[0, 0] = True
    x_like = rng.standard_normal((big_t, n))
    panel = ObservationPanel.from_dense(x_like, mask)
    return panel, params, jumps
