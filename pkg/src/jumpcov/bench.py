"""Monte Carlo benchmark harness: simulate, estimate with each requested
method, score portfolio variance and relative covariance error, and emit
mean/median tables shaped like the study tables plus per-replication CSVs.

Per-replication seeds derive from SeedSequence([seed, cell, rep]); rows are
aggregated in canonical order, so reports are byte-stable under a fixed
seed no matter how workers are scheduled.  Wall-clock timings live in their
own artifact (timing.csv) and are all that varies between reruns.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._backend import wall_clock
from .gibbs import GibbsConfig, run_gibbs
from .kecm import KecmRunConfig, run_kem
from .laplace import run_kecm_laplace
from .metrics import (min_variance_portfolio, portfolio_variance,
                      refresh_time_covariance, rel_frobenius)
from .model import default_hyperparameters
from .simulate import SimConfig, simulate_dataset
from .spikeslab import run_kecm_spikeslab

ESTIMATORS = ("refresh", "kem", "kecm-laplace", "kecm-spikeslab", "gibbs")


@dataclass(frozen=True)
class BenchCell:
    zeta: float
    sigma_j2: float | None = None  # None only when zeta == 1 (no jumps)

    def label(self) -> tuple[str, str]:
        return (repr(self.zeta),
                "" if self.sigma_j2 is None else repr(self.sigma_j2))


@dataclass(frozen=True)
class BenchConfig:
    cells: tuple[BenchCell, ...]
    n_reps: int = 10
    n_assets: int = 10
    n_times: int = 900
    model: str = "jump_diffusion"
    noise_mode: str = "stationary"
    p_obs: float = 0.3
    estimators: tuple[str, ...] = ("refresh", "kem", "kecm-laplace",
                                   "kecm-spikeslab")
    seed: int = 0
    threads: int = 1
    kecm: KecmRunConfig = field(default_factory=KecmRunConfig)
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)

    def __post_init__(self):
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}; "
                             f"choose from {ESTIMATORS}")
        if not self.cells:
            raise ValueError("benchmark grid needs at least one cell")
        for cell in self.cells:
            if cell.sigma_j2 is None and cell.zeta < 1.0:
                raise ValueError("sigma_j2 required when zeta < 1")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        data = dict(data)
        cells = tuple(BenchCell(zeta=float(c["zeta"]),
                                sigma_j2=(None if c.get("sigma_j2") is None
                                          else float(c["sigma_j2"])))
                      for c in data.pop("cells"))
        kecm_cfg = KecmRunConfig(**data.pop("kecm", {}))
        gibbs_cfg = GibbsConfig(**data.pop("gibbs", {}))
        if "estimators" in data:
            data["estimators"] = tuple(data["estimators"])
        return cls(cells=cells, kecm=kecm_cfg, gibbs=gibbs_cfg, **data)


@dataclass
class RepResult:
    cell_index: int
    rep: int
    estimator: str
    portfolio_var: float
    rel_frob: float
    seconds: float
    status: str  # "ok" or "error:<...>"


@dataclass
class BenchReport:
    config: BenchConfig
    rows: list[RepResult]

    def mean_rows(self) -> list[dict]:
        out = []
        for ci, cell in enumerate(self.config.cells):
            for est in self.config.estimators:
                ok = [r for r in self.rows
                      if r.cell_index == ci and r.estimator == est
                      and r.status == "ok"]
                pv = np.array([r.portfolio_var for r in ok])
                rf = np.array([r.rel_frob for r in ok])
                out.append({
                    "zeta": cell.zeta,
                    "sigma_j2": cell.sigma_j2,
                    "estimator": est,
                    "n_ok": len(ok),
                    "mean_portfolio_var": float(pv.mean()) if ok else np.nan,
                    "mean_rel_frobenius": float(rf.mean()) if ok else np.nan,
                    "median_rel_frobenius": (float(np.median(rf))
                                             if ok else np.nan),
                })
        return out


def _run_cell_rep(cfg: BenchConfig, cell_index: int, rep: int
                  ) -> list[RepResult]:
    cell = cfg.cells[cell_index]
    sim_cfg = SimConfig(
        n_assets=cfg.n_assets, n_times=cfg.n_times, model=cfg.model,
        zeta=cell.zeta,
        sigma_j2=cell.sigma_j2 if cell.sigma_j2 is not None else 1e-4,
        noise_mode=cfg.noise_mode, p_obs=cfg.p_obs)
    sim_seed = np.random.SeedSequence([cfg.seed, cell_index, rep, 0])
    data = simulate_dataset(sim_cfg, rng=np.random.default_rng(sim_seed))
    hyper = default_hyperparameters(cfg.n_assets)
    truth = data.truth

    results: list[RepResult] = []
    spikeslab_report = None
    order = [e for e in ESTIMATORS if e in cfg.estimators]
    need_init = "gibbs" in order and "kecm-spikeslab" not in order
    for est in (["kecm-spikeslab"] if need_init else []) + order:
        wanted = est in cfg.estimators
        t0 = wall_clock()
        try:
            if est == "refresh":
                gamma = refresh_time_covariance(data.panel)
            elif est == "kem":
                gamma = run_kem(data.panel, hyper, cfg.kecm).gamma
            elif est == "kecm-laplace":
                gamma = run_kecm_laplace(data.panel, hyper, cfg.kecm).gamma
            elif est == "kecm-spikeslab":
                if spikeslab_report is None:
                    spikeslab_report = run_kecm_spikeslab(
                        data.panel, hyper, cfg.kecm)
                gamma = spikeslab_report.gamma
            elif est == "gibbs":
                gseed = np.random.SeedSequence([cfg.seed, cell_index, rep, 1])
                gcfg = replace(cfg.gibbs,
                               seed=int(gseed.generate_state(1)[0]))
                report, _ = run_gibbs(data.panel, hyper, gcfg,
                                      init=spikeslab_report)
                gamma = report.gamma
            else:  # pragma: no cover - guarded by config validation
                raise ValueError(est)
            weights = min_variance_portfolio(gamma)
            row = RepResult(
                cell_index=cell_index, rep=rep, estimator=est,
                portfolio_var=portfolio_variance(weights, truth.gamma),
                rel_frob=rel_frobenius(gamma, truth.gamma),
                seconds=wall_clock() - t0, status="ok")
        except Exception as exc:  # noqa: BLE001 - failures are data points
            row = RepResult(
                cell_index=cell_index, rep=rep, estimator=est,
                portfolio_var=np.nan, rel_frob=np.nan,
                seconds=wall_clock() - t0,
                status=f"error:{type(exc).__name__}:{exc}")
        if wanted:
            results.append(row)
    return results


def run_benchmark(cfg: BenchConfig) -> BenchReport:
    jobs = [(ci, rep) for ci in range(len(cfg.cells))
            for rep in range(cfg.n_reps)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            chunks = list(pool.map(
                lambda job: _run_cell_rep(cfg, job[0], job[1]), jobs))
    else:
        chunks = [_run_cell_rep(cfg, ci, rep) for ci, rep in jobs]
    rows = [row for chunk in chunks for row in chunk]
    est_order = {e: k for k, e in enumerate(ESTIMATORS)}
    rows.sort(key=lambda r: (r.cell_index, r.rep, est_order[r.estimator]))
    return BenchReport(config=cfg, rows=rows)


def _fmt(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


def write_benchmark_outputs(report: BenchReport, out_dir) -> None:
    """results_mean.csv, results_raw.csv, timing.csv and summary.md."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    cfg = report.config

    with open(os.path.join(out_dir, "results_raw.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("zeta,sigma_j2,rep,estimator,"
                 "portfolio_variance,rel_frobenius,status\n")
        for r in report.rows:
            z, s = cfg.cells[r.cell_index].label()
            fh.write(f"{z},{s},{r.rep},{r.estimator},"
                     f"{_fmt(r.portfolio_var)},{_fmt(r.rel_frob)},"
                     f"{r.status}\n")

    with open(os.path.join(out_dir, "timing.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("zeta,sigma_j2,rep,estimator,seconds\n")
        for r in report.rows:
            z, s = cfg.cells[r.cell_index].label()
            fh.write(f"{z},{s},{r.rep},{r.estimator},{r.seconds!r}\n")

    means = report.mean_rows()
    with open(os.path.join(out_dir, "results_mean.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("zeta,sigma_j2,estimator,n_ok,mean_portfolio_var,"
                 "mean_rel_frobenius,median_rel_frobenius\n")
        for m in means:
            s = "" if m["sigma_j2"] is None else repr(m["sigma_j2"])
            fh.write(f"{m['zeta']!r},{s},{m['estimator']},{m['n_ok']},"
                     f"{_fmt(m['mean_portfolio_var'])},"
                     f"{_fmt(m['mean_rel_frobenius'])},"
                     f"{_fmt(m['median_rel_frobenius'])}\n")

    with open(os.path.join(out_dir, "summary.md"), "w",
              encoding="utf-8", newline="\n") as fh:
        for title, key in (("Portfolio variance (mean)",
                            "mean_portfolio_var"),
                           ("Relative covariance error (mean)",
                            "mean_rel_frobenius")):
            fh.write(f"## {title}\n\n")
            fh.write("| zeta | sigma_j2 | "
                     + " | ".join(cfg.estimators) + " |\n")
            fh.write("|" + "---|" * (2 + len(cfg.estimators)) + "\n")
            for ci, cell in enumerate(cfg.cells):
                z, s = cell.label()
                vals = []
                for est in cfg.estimators:
                    m = next(r for r in means
                             if r["estimator"] == est
                             and r["zeta"] == cell.zeta
                             and r["sigma_j2"] == cell.sigma_j2)
                    v = m[key]
                    vals.append("n/a" if np.isnan(v) else f"{v:.3g}")
                fh.write(f"| {z} | {s or 'n/a'} | "
                         + " | ".join(vals) + " |\n")
            fh.write("\n")


def bench_config_from_json(path) -> BenchConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return BenchConfig.from_dict(json.load(fh))
