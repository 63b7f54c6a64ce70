"""Command-line entry point.

Subcommands: simulate, estimate, benchmark, calibrate-lambda, verify-theory.
Exit codes: 0 success, 1 usage/config error (malformed configs report the
offending JSON path), 2 runtime failure.  All artifacts are byte-stable
under a fixed seed; wall-time fields are the only exception and freeze to
zero under JUMPCOV_FIXED_CLOCK=1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench as bench_mod
from .gibbs import GibbsConfig, run_gibbs
from .kecm import KecmRunConfig, run_kem
from .laplace import calibrate_lambda_prior, run_kecm_laplace
from .model import Hyperparameters, read_panel_csv, write_panel_csv
from .report import write_gamma_csv, write_report_json, write_trace_csv
from .simulate import SimConfig, simulate_dataset
from .spikeslab import (OracleProblem, conditional_ab, erf_bound_check,
                        lemma1_residual, oracle_jump_estimate,
                        run_kecm_spikeslab)

METHODS = ("kem", "kecm-laplace", "kecm-spikeslab", "gibbs")


class ConfigError(Exception):
    """Malformed configuration; carries the offending JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.json_path = path


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1 (argparse default is 2, reserved for runtime here)
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_json(path, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("$", f"{what} config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON in {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("$", "top-level JSON value must be an object")
    return data


def _section(data: dict, key: str) -> dict:
    sub = data.get(key, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"$.{key}", "must be an object")
    return sub


def _build(cls, section: dict, path: str, **extra):
    try:
        return cls(**section, **extra)
    except TypeError as exc:
        raise ConfigError(path, str(exc))
    except (ValueError, KeyError) as exc:
        raise ConfigError(path, str(exc))


def _hyper_from(section: dict, n_assets: int, path: str) -> Hyperparameters:
    try:
        hyper = Hyperparameters.from_dict(section, n_assets)
        hyper.validate(n_assets)
        return hyper
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(path, str(exc))


def _cmd_simulate(args) -> int:
    data = _load_json(args.config, "simulate") if args.config else {}
    if args.seed is not None:
        data["seed"] = args.seed
    seed = data.pop("seed", 0)
    cfg = _build(SimConfig, data, "$")
    sim = simulate_dataset(cfg, seed=seed)
    os.makedirs(args.out, exist_ok=True)
    write_panel_csv(sim.panel, os.path.join(args.out, "panel.csv"))
    write_gamma_csv(sim.truth.gamma, os.path.join(args.out, "gamma_true.csv"))
    truth = {
        "seed": seed,
        "model": cfg.model,
        "zeta": cfg.zeta,
        "sigma_j2": cfg.sigma_j2,
        "noise_mode": cfg.noise_mode,
        "gamma": sim.truth.gamma.tolist(),
        "drift": sim.truth.drift.tolist(),
        "obs_var": sim.truth.obs_var.tolist(),
        "x": sim.truth.x.tolist(),
        "jumps": sim.truth.jumps.tolist(),
        "indicator": sim.truth.indicator.tolist(),
        "forced_observations": [list(f) for f in
                                sim.truth.forced_observations],
    }
    if sim.truth.cond_var is not None:
        truth["cond_var"] = sim.truth.cond_var.tolist()
    with open(os.path.join(args.out, "truth.json"), "w",
              encoding="utf-8", newline="\n") as fh:
        json.dump(truth, fh)
        fh.write("\n")
    return 0


def _write_gibbs_trace(chain, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sweep,logdens,zeta,trace_gamma\n")
        for k in range(chain.zeta_trace.shape[0]):
            fh.write(f"{k + 1},{chain.logdens_trace[k]!r},"
                     f"{chain.zeta_trace[k]!r},{chain.gamma_trace[k]!r}\n")


def _cmd_estimate(args) -> int:
    data = _load_json(args.config, "estimate") if args.config else {}
    panel = read_panel_csv(args.panel)
    hyper = _hyper_from(_section(data, "hyperparameters"), panel.n_assets,
                        "$.hyperparameters")
    kecm_cfg = _build(KecmRunConfig, _section(data, "kecm"), "$.kecm")
    gibbs_section = _section(data, "gibbs")
    if args.seed is not None:
        gibbs_section = {**gibbs_section, "seed": args.seed}
    gibbs_cfg = _build(GibbsConfig, gibbs_section, "$.gibbs")

    chain = None
    if args.method == "kem":
        report = run_kem(panel, hyper, kecm_cfg)
    elif args.method == "kecm-laplace":
        report = run_kecm_laplace(panel, hyper, kecm_cfg)
    elif args.method == "kecm-spikeslab":
        report = run_kecm_spikeslab(panel, hyper, kecm_cfg)
    else:
        init = run_kecm_spikeslab(panel, hyper, kecm_cfg)
        report, chain = run_gibbs(panel, hyper, gibbs_cfg, init)

    os.makedirs(args.out, exist_ok=True)
    write_gamma_csv(report.gamma, os.path.join(args.out, "gamma.csv"))
    write_report_json(report, os.path.join(args.out, "report.json"))
    if chain is not None:
        _write_gibbs_trace(chain, os.path.join(args.out, "trace.csv"))
    else:
        write_trace_csv(report.trace, os.path.join(args.out, "trace.csv"))
    return 0


def _cmd_benchmark(args) -> int:
    data = _load_json(args.config, "benchmark")
    if args.seed is not None:
        data["seed"] = args.seed
    if args.threads is not None:
        data["threads"] = args.threads
    try:
        cfg = bench_mod.BenchConfig.from_dict(data)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError("$", str(exc))
    report = bench_mod.run_benchmark(cfg)
    bench_mod.write_benchmark_outputs(report, args.out)
    return 0


def _cmd_calibrate_lambda(args) -> int:
    data = _load_json(args.config, "calibrate-lambda")

    def prior(key: str, names: tuple[str, str]) -> tuple[float, float]:
        sub = data.get(key)
        if not isinstance(sub, dict):
            raise ConfigError(f"$.{key}", "must be an object")
        try:
            return float(sub[names[0]]), float(sub[names[1]])
        except KeyError as exc:
            raise ConfigError(f"$.{key}.{exc.args[0]}", "missing key")
        except (TypeError, ValueError):
            raise ConfigError(f"$.{key}", "values must be numbers")

    sigma_v2 = prior("sigma_v2", ("shape", "scale"))
    zeta = prior("zeta", ("a", "b"))
    sigma_j2 = prior("sigma_j2", ("shape", "scale"))
    n_outer = int(data.get("n_outer", 2000))
    n_inner = int(data.get("n_inner", 2000))
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))

    result = calibrate_lambda_prior(sigma_v2, zeta, sigma_j2,
                                    n_outer=n_outer, n_inner=n_inner,
                                    seed=seed)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "lambda_prior.json"), "w",
              encoding="utf-8", newline="\n") as fh:
        json.dump({
            "alpha_lambda": result.alpha_lambda,
            "beta_lambda": result.beta_lambda,
            "n_outer": n_outer,
            "n_inner": n_inner,
            "sample_mean": float(result.samples.mean()),
            "sample_var": float(result.samples.var(ddof=1)),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    counts, edges = np.histogram(result.samples, bins=50)
    with open(os.path.join(args.out, "lambda_hist.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("bin_left,bin_right,count\n")
        for k in range(counts.size):
            fh.write(f"{edges[k]!r},{edges[k + 1]!r},{counts[k]}\n")
    return 0


def _cmd_verify_theory(args) -> int:
    data = _load_json(args.config, "verify-theory") if args.config else {}
    n_instances = int(data.get("n_instances", 20))
    n_assets = int(data.get("n_assets", 6))
    support = int(data.get("support_size", 2))
    n_trials = int(data.get("n_trials", 10_000))
    fixed_tol = float(data.get("fixed_point_tol", 1e-10))
    min_decay = float(data.get("min_decay", 50.0))
    delta_grid = np.asarray(data.get("delta_grid",
                                     [0.002, 0.005, 0.01, 0.02, 0.05]),
                            dtype=np.float64)
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))
    rng = np.random.default_rng(seed)

    rows: list[tuple[str, str, float, float, bool]] = []
    for k in range(n_instances):
        name = f"inst{k:03d}"
        a = rng.standard_normal((n_assets, n_assets))
        gamma = 1e-8 * (a @ a.T + n_assets * np.eye(n_assets))
        slab = 10.0 ** rng.uniform(-5, -3, size=support)
        prob = OracleProblem(gamma=gamma, support_size=support,
                             slab_var=slab)
        delta = rng.standard_normal(n_assets) * 1e-3
        est = oracle_jump_estimate(prob, delta)
        resid = 0.0
        for i in range(support):
            a_i, b2_i = conditional_ab(gamma, delta, est, i)
            resid = max(resid, abs(est[i] - a_i / (1.0 + b2_i / slab[i])))
        rows.append((name, "oracle_fixed_point_residual", fixed_tol,
                     resid, resid <= fixed_tol))

        base = lemma1_residual(prob)
        wide = lemma1_residual(OracleProblem(
            gamma=gamma, support_size=support, slab_var=100.0 * slab))
        ratio = base / wide if wide > 0 else np.inf
        rows.append((name, "lemma1_decay_ratio_100x", min_decay, ratio,
                     ratio >= min_decay))

        diag = np.diag(1e-8 * (1.0 + rng.random(n_assets)))
        dprob = OracleProblem(gamma=diag, support_size=support,
                              slab_var=np.full(support, 1e-4))
        jumps_true = np.zeros(n_assets)
        jumps_true[:support] = rng.normal(0.0, 0.01, size=support)
        check = erf_bound_check(dprob, jumps_true, delta_grid,
                                n_trials=n_trials,
                                seed=int(rng.integers(2 ** 31)))
        for r in check.rows:
            rows.append((name, f"erf_bound_asset{r.asset}_delta{r.delta!r}",
                         r.bound, r.empirical, r.ok))

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "theory_checks.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("instance,quantity,bound,empirical,pass\n")
        for name, quantity, bound, emp, ok in rows:
            fh.write(f"{name},{quantity},{bound!r},{emp!r},"
                     f"{'pass' if ok else 'FAIL'}\n")
    return 0 if all(r[4] for r in rows) else 2


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jumpcov",
                     description="High-frequency covariance estimation "
                                 "with jump-robust Kalman ECM and Gibbs "
                                 "samplers.")
    parser.add_argument("--seed", type=int, default=None,
                        help="global seed override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic panel")
    p.add_argument("--config", default=None, help="SimConfig JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="estimate a covariance from a panel")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--panel", required=True)
    p.add_argument("--config", default=None,
                   help="JSON with hyperparameters/kecm/gibbs sections")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("benchmark", help="Monte Carlo estimator comparison")
    p.add_argument("--config", required=True, help="BenchConfig JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("calibrate-lambda",
                       help="fit the L1 rate prior to a spike-and-slab spec")
    p.add_argument("--config", required=True, help="prior spec JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_calibrate_lambda)

    p = sub.add_parser("verify-theory",
                       help="numerical checks of the oracle-recovery bounds")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_verify_theory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error at {exc.json_path}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
