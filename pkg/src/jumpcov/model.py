"""Domain types shared by every estimator: observation panels, state-space
parameters, jump blocks, and prior hyperparameters.

Panels index time 1..T and assets 1..N externally (CSV, validation messages)
but store 0-based arrays internally.  All containers freeze their arrays
after construction so instances can be shared across threads.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, fields

import numpy as np

from ._linalg import is_spd, min_eigenvalue

SECONDS_PER_DAY = 23400.0  # one 6.5 hour trading session at 1s resolution


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str
    t: int | None = None
    asset: int | None = None


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    issues: tuple[ValidationIssue, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


class ObservationPanel:
    """Asynchronous log-price observations on a unit time grid.

    Wall-clock irregular timestamps must be pre-gridded by the caller; here
    t runs over the integers 1..T.  Observations are stored in CSR layout
    sorted by (t, asset); ``obs_ptr[t-1]:obs_ptr[t]`` delimits time t.
    """

    def __init__(self, n_assets: int, n_times: int, obs_ptr: np.ndarray,
                 obs_asset: np.ndarray, obs_price: np.ndarray):
        if n_assets < 1:
            raise ValueError("n_assets must be >= 1")
        if n_times < 1:
            raise ValueError("n_times must be >= 1")
        self.n_assets = int(n_assets)
        self.n_times = int(n_times)
        self.obs_ptr = np.ascontiguousarray(obs_ptr, dtype=np.int64)
        self.obs_asset = np.ascontiguousarray(obs_asset, dtype=np.int64)
        self.obs_price = np.ascontiguousarray(obs_price, dtype=np.float64)
        if self.obs_ptr.shape != (self.n_times + 1,):
            raise ValueError("obs_ptr must have length n_times + 1")
        if self.obs_ptr[0] != 0 or self.obs_ptr[-1] != self.obs_asset.size:
            raise ValueError("obs_ptr endpoints inconsistent with data size")
        if np.any(np.diff(self.obs_ptr) < 0):
            raise ValueError("obs_ptr must be non-decreasing")
        if self.obs_asset.size != self.obs_price.size:
            raise ValueError("asset and price arrays must align")
        if self.obs_asset.size and (
                self.obs_asset.min() < 0 or self.obs_asset.max() >= n_assets):
            raise ValueError("asset index out of range")
        for arr in (self.obs_ptr, self.obs_asset, self.obs_price):
            arr.flags.writeable = False

    @classmethod
    def from_records(cls, n_assets: int, n_times: int,
                     records) -> "ObservationPanel":
        """Build from (t, asset, log_price) triples with 1-based t and asset."""
        rows = [(int(t), int(a), float(p)) for t, a, p in records]
        for t, a, _ in rows:
            if not 1 <= t <= n_times:
                raise ValueError(f"time {t} outside 1..{n_times}")
            if not 1 <= a <= n_assets:
                raise ValueError(f"asset {a} outside 1..{n_assets}")
        rows.sort(key=lambda r: (r[0], r[1]))
        t_arr = np.array([r[0] - 1 for r in rows], dtype=np.int64)
        ptr = np.zeros(n_times + 1, dtype=np.int64)
        np.add.at(ptr, t_arr + 1, 1)
        ptr = np.cumsum(ptr)
        asset = np.array([r[1] - 1 for r in rows], dtype=np.int64)
        price = np.array([r[2] for r in rows], dtype=np.float64)
        return cls(n_assets, n_times, ptr, asset, price)

    @classmethod
    def from_dense(cls, prices: np.ndarray,
                   mask: np.ndarray) -> "ObservationPanel":
        """Build from a (T, N) price array and a boolean observation mask."""
        prices = np.asarray(prices, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if prices.shape != mask.shape or prices.ndim != 2:
            raise ValueError("prices and mask must be matching (T, N) arrays")
        t_idx, a_idx = np.nonzero(mask)
        ptr = np.zeros(prices.shape[0] + 1, dtype=np.int64)
        np.add.at(ptr, t_idx + 1, 1)
        ptr = np.cumsum(ptr)
        return cls(prices.shape[1], prices.shape[0], ptr,
                   a_idx.astype(np.int64), prices[t_idx, a_idx])

    def observations_at(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """(0-based asset indices, prices) observed at 1-based time t."""
        lo, hi = self.obs_ptr[t - 1], self.obs_ptr[t]
        return self.obs_asset[lo:hi], self.obs_price[lo:hi]

    def to_records(self) -> list[tuple[int, int, float]]:
        out = []
        for t in range(1, self.n_times + 1):
            assets, prices = self.observations_at(t)
            out.extend((t, int(a) + 1, float(p))
                       for a, p in zip(assets, prices))
        return out

    def counts_per_asset(self) -> np.ndarray:
        """M_i: number of observations of each asset over all times."""
        return np.bincount(self.obs_asset, minlength=self.n_assets)

    def mask(self) -> np.ndarray:
        """Dense (T, N) boolean observation mask; True where duplicates too."""
        out = np.zeros((self.n_times, self.n_assets), dtype=bool)
        t_idx = np.repeat(np.arange(self.n_times), np.diff(self.obs_ptr))
        out[t_idx, self.obs_asset] = True
        return out

    def dense_prices(self, fill: float = np.nan) -> np.ndarray:
        out = np.full((self.n_times, self.n_assets), fill, dtype=np.float64)
        t_idx = np.repeat(np.arange(self.n_times), np.diff(self.obs_ptr))
        out[t_idx, self.obs_asset] = self.obs_price
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationPanel):
            return NotImplemented
        return (self.n_assets == other.n_assets
                and self.n_times == other.n_times
                and np.array_equal(self.obs_ptr, other.obs_ptr)
                and np.array_equal(self.obs_asset, other.obs_asset)
                and np.array_equal(self.obs_price, other.obs_price))

    def __repr__(self) -> str:
        return (f"ObservationPanel(n_assets={self.n_assets}, "
                f"n_times={self.n_times}, n_obs={self.obs_price.size})")


def validate_panel(panel: ObservationPanel) -> ValidationResult:
    """Diagnose invariant violations; never raises.

    Checks: T >= 2, unique asset per time, at least one observation at every
    time, and every asset observed at least once after the first step.
    """
    issues: list[ValidationIssue] = []
    if panel.n_times < 2:
        issues.append(ValidationIssue(
            "too_few_times", f"panel has T={panel.n_times}, need T >= 2"))
    seen_after_first = np.zeros(panel.n_assets, dtype=bool)
    for t in range(1, panel.n_times + 1):
        assets, _ = panel.observations_at(t)
        if assets.size == 0:
            issues.append(ValidationIssue(
                "empty_time", f"no observations at t={t}", t=t))
        uniq, counts = np.unique(assets, return_counts=True)
        for a, c in zip(uniq, counts):
            if c > 1:
                issues.append(ValidationIssue(
                    "duplicate_observation",
                    f"asset {int(a) + 1} observed {int(c)} times at t={t}",
                    t=t, asset=int(a) + 1))
        if t > 1:
            seen_after_first[assets] = True
    for a in np.nonzero(~seen_after_first)[0]:
        issues.append(ValidationIssue(
            "asset_coverage",
            f"asset {int(a) + 1} never observed for t > 1", asset=int(a) + 1))
    return ValidationResult(ok=not issues, issues=tuple(issues))


PANEL_CSV_HEADER = "t,asset,log_price"


def write_panel_csv(panel: ObservationPanel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(PANEL_CSV_HEADER + "\n")
        for t, a, p in panel.to_records():
            fh.write(f"{t},{a},{p!r}\n")


def read_panel_csv(path, n_assets: int | None = None,
                   n_times: int | None = None) -> ObservationPanel:
    """Read the documented panel format; dimensions default to the data maxima."""
    if isinstance(path, io.TextIOBase):
        lines = path.read().splitlines()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    if not lines or lines[0].strip() != PANEL_CSV_HEADER:
        raise ValueError(
            f"panel CSV must start with header '{PANEL_CSV_HEADER}'")
    records = []
    for k, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"line {k}: expected 3 fields, got {len(parts)}")
        records.append((int(parts[0]), int(parts[1]), float(parts[2])))
    if not records:
        raise ValueError("panel CSV has no data rows")
    if n_times is None:
        n_times = max(r[0] for r in records)
    if n_assets is None:
        n_assets = max(r[1] for r in records)
    return ObservationPanel.from_records(n_assets, n_times, records)


@dataclass(frozen=True, eq=False)
class StateParams:
    """State-space parameter block shared by all estimators.

    drift and init_mean are per-asset vectors, gamma and init_cov are SPD
    matrices, obs_var holds the per-asset observation noise variances.
    """

    drift: np.ndarray
    gamma: np.ndarray
    obs_var: np.ndarray
    init_mean: np.ndarray
    init_cov: np.ndarray

    def __post_init__(self):
        for name in ("drift", "gamma", "obs_var", "init_mean", "init_cov"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def n_assets(self) -> int:
        return self.drift.shape[0]

    def validate(self) -> None:
        n = self.n_assets
        if self.gamma.shape != (n, n) or self.init_cov.shape != (n, n):
            raise ValueError("covariance shapes inconsistent with drift")
        if self.obs_var.shape != (n,) or self.init_mean.shape != (n,):
            raise ValueError("vector shapes inconsistent with drift")
        if np.any(self.obs_var <= 0):
            raise ValueError("obs_var entries must be strictly positive")
        for name, mat in (("gamma", self.gamma), ("init_cov", self.init_cov)):
            scale = max(float(np.max(np.abs(mat))), 1e-300)
            if np.max(np.abs(mat - mat.T)) > 1e-12 * scale:
                raise ValueError(f"{name} is not symmetric")
            if min_eigenvalue(mat) <= 0:
                raise ValueError(f"{name} is not positive definite")

    def replace(self, **kwargs) -> "StateParams":
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        current.update(kwargs)
        return StateParams(**current)


@dataclass(frozen=True, eq=False)
class LaplaceJumpState:
    """Jump block under the heavy-tailed (L1) prior: values and rates.

    Arrays are (T-1, N); row k describes the jump entering step k+2 in
    1-based time.  A rate of +inf pins the jump at zero (no observation
    implies no jump).
    """

    jumps: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "jumps", _freeze(self.jumps))
        object.__setattr__(self, "rates", _freeze(self.rates))

    def validate(self) -> None:
        if self.jumps.shape != self.rates.shape:
            raise ValueError("jumps and rates must share a shape")
        if np.any(self.rates <= 0):
            raise ValueError("rates must be positive (inf allowed)")
        pinned = np.isinf(self.rates)
        if np.any(self.jumps[pinned] != 0.0):
            raise ValueError("jump must be 0 wherever the rate is inf")


@dataclass(frozen=True, eq=False)
class SpikeSlabJumpState:
    """Jump block under the two-component prior: indicators, slab values,
    the shared no-jump probability and per-entry slab variances."""

    indicator: np.ndarray
    slab: np.ndarray
    spike_prob: float
    slab_var: np.ndarray

    def __post_init__(self):
        ind = np.ascontiguousarray(self.indicator, dtype=np.int8)
        ind.flags.writeable = False
        object.__setattr__(self, "indicator", ind)
        object.__setattr__(self, "slab", _freeze(self.slab))
        object.__setattr__(self, "slab_var", _freeze(self.slab_var))

    @property
    def jumps(self) -> np.ndarray:
        return self.indicator * self.slab

    def validate(self) -> None:
        if not 0.0 < self.spike_prob < 1.0:
            raise ValueError("spike_prob must lie in (0, 1)")
        if not np.all(np.isin(self.indicator, (0, 1))):
            raise ValueError("indicator entries must be 0 or 1")
        if np.any(self.slab_var <= 0):
            raise ValueError("slab_var entries must be positive")
        if not (self.indicator.shape == self.slab.shape
                == self.slab_var.shape):
            raise ValueError("jump block arrays must share a shape")


@dataclass(frozen=True, eq=False)
class Hyperparameters:
    """Conjugate prior parameters.

    d_bar/sigma_d2: normal prior on the drift.  eta/w_o: inverse-Wishart
    prior on the process covariance.  alpha_o/beta_o: inverse-gamma prior on
    observation noise variances.  alpha_zeta/beta_zeta: beta prior on the
    no-jump probability.  alpha_j/beta_j: inverse-gamma prior on slab
    variances.  alpha_lambda/beta_lambda: gamma prior on the L1 jump rate.
    """

    d_bar: np.ndarray
    sigma_d2: float
    eta: float
    w_o: np.ndarray
    alpha_o: float
    beta_o: float
    alpha_zeta: float
    beta_zeta: float
    alpha_j: float
    beta_j: float
    alpha_lambda: float
    beta_lambda: float

    def __post_init__(self):
        object.__setattr__(self, "d_bar", _freeze(np.atleast_1d(self.d_bar)))
        object.__setattr__(self, "w_o", _freeze(self.w_o))

    def validate(self, n_assets: int | None = None) -> None:
        n = self.w_o.shape[0]
        if n_assets is not None and n != n_assets:
            raise ValueError("w_o size does not match the panel")
        if self.d_bar.shape != (n,):
            raise ValueError("d_bar must have one entry per asset")
        scalars = dict(sigma_d2=self.sigma_d2, alpha_o=self.alpha_o,
                       beta_o=self.beta_o, alpha_zeta=self.alpha_zeta,
                       beta_zeta=self.beta_zeta, alpha_j=self.alpha_j,
                       beta_j=self.beta_j, alpha_lambda=self.alpha_lambda,
                       beta_lambda=self.beta_lambda)
        for name, value in scalars.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive")
        if self.eta <= n - 1:
            raise ValueError("eta must exceed n_assets - 1")
        if not is_spd(self.w_o):
            raise ValueError("w_o must be symmetric positive definite")

    def to_dict(self) -> dict:
        return {
            "d_bar": self.d_bar.tolist(),
            "sigma_d2": self.sigma_d2,
            "eta": self.eta,
            "w_o": self.w_o.tolist(),
            "alpha_o": self.alpha_o,
            "beta_o": self.beta_o,
            "alpha_zeta": self.alpha_zeta,
            "beta_zeta": self.beta_zeta,
            "alpha_j": self.alpha_j,
            "beta_j": self.beta_j,
            "alpha_lambda": self.alpha_lambda,
            "beta_lambda": self.beta_lambda,
        }

    @classmethod
    def from_dict(cls, data: dict, n_assets: int) -> "Hyperparameters":
        """Merge a JSON-style dict over the documented defaults.

        w_o may be given as a full matrix or a scalar multiple of the
        identity; d_bar as a vector or scalar.
        """
        base = default_hyperparameters(n_assets)
        values = {f.name: getattr(base, f.name) for f in fields(cls)}
        unknown = set(data) - set(values)
        if unknown:
            raise KeyError(f"unknown hyperparameter keys: {sorted(unknown)}")
        for key, raw in data.items():
            if key == "w_o":
                arr = np.asarray(raw, dtype=np.float64)
                values[key] = arr * np.eye(n_assets) if arr.ndim == 0 else arr
            elif key == "d_bar":
                arr = np.asarray(raw, dtype=np.float64)
                values[key] = (np.full(n_assets, float(arr))
                               if arr.ndim == 0 else arr)
            else:
                values[key] = float(raw)
        return cls(**values)


def default_hyperparameters(n_assets: int) -> Hyperparameters:
    """Documented defaults: diffuse conjugate priors tuned to 1-second data
    with roughly 2 percent daily volatility.

    Prior modes: obs noise 1e-8, slab variance 1e-4, no-jump probability
    mean 0.995.  sigma_d2 has no tabled value; 1e-6 is diffuse relative to
    per-step drifts and can be overridden.
    """
    if n_assets < 1:
        raise ValueError("n_assets must be >= 1")
    eta = float(n_assets + 5)
    w_scale = 0.02 ** 2 * (eta + n_assets + 1) / SECONDS_PER_DAY
    return Hyperparameters(
        d_bar=np.zeros(n_assets),
        sigma_d2=1e-6,
        eta=eta,
        w_o=w_scale * np.eye(n_assets),
        alpha_o=5.0,
        beta_o=6.0 * 0.0001 ** 2,
        alpha_zeta=9.95,
        beta_zeta=0.05,
        alpha_j=10.0,
        beta_j=0.01 ** 2 * 11.0,
        alpha_lambda=5.6,
        beta_lambda=5e-4,
    )


def default_state_params(panel: ObservationPanel, hyper: Hyperparameters,
                         gamma0: np.ndarray | None = None) -> StateParams:
    """Initial state parameters per the documented conventions.

    init_mean is each asset's first observed log price (0 if never
    observed); init_cov is 100x the prior scale diagonal; obs_var starts at
    the prior mode; gamma0 defaults to the prior mode of the covariance.
    """
    n = panel.n_assets
    mu = np.zeros(n)
    seen = np.zeros(n, dtype=bool)
    for t in range(1, panel.n_times + 1):
        assets, prices = panel.observations_at(t)
        fresh = ~seen[assets]
        mu[assets[fresh]] = prices[fresh]
        seen[assets[fresh]] = True
        if seen.all():
            break
    if gamma0 is None:
        gamma0 = hyper.w_o / (hyper.eta + n + 1)
    return StateParams(
        drift=np.zeros(n),
        gamma=np.asarray(gamma0, dtype=np.float64),
        obs_var=np.full(n, hyper.beta_o / (hyper.alpha_o + 1.0)),
        init_mean=mu,
        init_cov=100.0 * np.diag(np.diag(hyper.w_o)),
    )
