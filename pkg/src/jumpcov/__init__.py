"""jumpcov: asset-return covariance estimation from asynchronous, noisy,
jump-contaminated high-frequency log prices.

Estimators: a no-jump Kalman-EM baseline, two jump-robust Kalman-ECM
variants (L1 and spike-and-slab jump priors), a Gibbs sampler with
Rao-Blackwellized posterior means, and a refresh-time sample-covariance
baseline.  Ships with the simulators, benchmark harness and theory checks
used to validate them.
"""

from ._backend import backend_name
from .gibbs import GibbsConfig, run_gibbs
from .kalman import (FilterResult, SmootherMoments, backward_smooth,
                     forward_filter, smooth)
from .kecm import (EStepStats, KecmRunConfig, estep_stats, log_posterior,
                   run_kem, update_drift, update_gamma, update_obs_var)
from .laplace import (calibrate_lambda_prior, laplace_shrink, run_kecm_laplace,
                      solve_l1_jump, update_lambda)
from .metrics import (min_variance_portfolio, portfolio_variance,
                      refresh_time_covariance, rel_frobenius)
from .model import (Hyperparameters, LaplaceJumpState, ObservationPanel,
                    SpikeSlabJumpState, StateParams, default_hyperparameters,
                    default_state_params, read_panel_csv, validate_panel,
                    write_panel_csv)
from .report import EstimationReport
from .simulate import SimConfig, simulate_dataset
from .spikeslab import (OracleProblem, conditional_ab, coordinate_descent_jumps,
                        erf_bound_check, lemma1_residual, oracle_jump_estimate,
                        run_kecm_spikeslab, spike_slab_shrink, spike_threshold,
                        update_sigma_j, update_zeta)

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "GibbsConfig", "run_gibbs",
    "FilterResult", "SmootherMoments", "backward_smooth", "forward_filter",
    "smooth",
    "EStepStats", "KecmRunConfig", "estep_stats", "log_posterior", "run_kem",
    "update_drift", "update_gamma", "update_obs_var",
    "calibrate_lambda_prior", "laplace_shrink", "run_kecm_laplace",
    "solve_l1_jump", "update_lambda",
    "min_variance_portfolio", "portfolio_variance", "refresh_time_covariance",
    "rel_frobenius",
    "Hyperparameters", "LaplaceJumpState", "ObservationPanel",
    "SpikeSlabJumpState", "StateParams", "default_hyperparameters",
    "default_state_params", "read_panel_csv", "validate_panel",
    "write_panel_csv",
    "EstimationReport",
    "SimConfig", "simulate_dataset",
    "OracleProblem", "conditional_ab", "coordinate_descent_jumps",
    "erf_bound_check", "lemma1_residual", "oracle_jump_estimate",
    "run_kecm_spikeslab", "spike_slab_shrink", "spike_threshold",
    "update_sigma_j", "update_zeta",
    "__version__",
]
