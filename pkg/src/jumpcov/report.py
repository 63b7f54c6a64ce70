"""Estimation reports and their on-disk artifacts (gamma.csv, report.json,
trace.csv).  Wall times honor JUMPCOV_FIXED_CLOCK for byte-reproducible
artifacts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._backend import backend_name


@dataclass
class TraceRow:
    iteration: int
    log_posterior: float
    rel_change: float
    elapsed_sec: float


@dataclass
class EstimationReport:
    """Final estimate plus iterate/sample diagnostics for one run."""

    method: str
    gamma: np.ndarray
    params: object | None = None
    jump_state: object | None = None
    n_iterations: int = 0
    converged: bool = True
    final_log_posterior: float = np.nan
    wall_time_sec: float = 0.0
    trace: list[TraceRow] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "n_assets": int(self.gamma.shape[0]),
            "n_iterations": int(self.n_iterations),
            "converged": bool(self.converged),
            "final_log_posterior": float(self.final_log_posterior),
            "wall_time_sec": float(self.wall_time_sec),
            "backend": backend_name(),
            **{k: v for k, v in self.extra.items()},
        }


def write_gamma_csv(gamma: np.ndarray, path) -> None:
    """Dense N x N matrix: one header row, then one row per asset."""
    n = gamma.shape[0]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(f"asset_{i + 1}" for i in range(n)) + "\n")
        for row in np.asarray(gamma, dtype=np.float64):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_gamma_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    return np.array(rows, dtype=np.float64)


def write_report_json(report: EstimationReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_csv(trace: list[TraceRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iter,log_posterior,rel_change,elapsed_sec\n")
        for row in trace:
            fh.write(f"{row.iteration},{row.log_posterior!r},"
                     f"{row.rel_change!r},{row.elapsed_sec!r}\n")
