"""Embedded-discrepancy enrichment for generalized Lotka-Volterra models.

Workflow: draw a random stable detailed model, keep a subset of species as
the reduced model, embed a linear state/rate discrepancy operator in the
reduced dynamics, calibrate its coefficients against noisy trajectories of
the detailed model, and judge the enriched predictions with density-level
gamma-values.
"""

from ._version import __version__
from .data import (CALIBRATION, VALIDATION, ObservationSet, Scenario,
                   default_observation_times, load_observations,
                   sample_scenarios, save_observations,
                   synthesize_observations)
from .dynamics import (DiscrepancyParams, SolverConfig, SolverStats, State,
                       Trajectory, integrate, rhs_enriched, rhs_glv,
                       solve_implicit_rate)
from .errors import (ConfigurationError, GlvdiscError, IntegrationError,
                     NegativeStateError, NoSolutionError, PredictiveError,
                     StepSizeUnderflow, SweepError)
from .inference import (DramConfig, LogLikelihood, PosteriorChain,
                        PredictiveEnsemble, PriorSpec, calibrate,
                        initial_theta, load_chain, log_prior,
                        make_log_posterior, posterior_predictive, run_dram,
                        save_chain)
from .models import (DetailedModel, GenerationConfig, ReducedModel,
                     StabilityReport, check_stability, generate_detailed,
                     load_model, save_model, subsample_reduced)
from .pipeline import (ExperimentConfig, RunResult, SweepResult,
                       enriched_truth_observations, load_config, run_single,
                       run_sweep, save_config)
from .rng import derive_seed, make_rng, seed_sequence
from .validation import (FGammaRow, GammaReport, complexity_table_to_csv,
                         compute_gammas, f_gamma, f_gamma_table_to_csv,
                         gamma_value, relative_complexity,
                         silverman_bandwidth)

__all__ = [
    "__version__",
    "CALIBRATION", "VALIDATION", "ObservationSet", "Scenario",
    "default_observation_times", "load_observations", "sample_scenarios",
    "save_observations", "synthesize_observations",
    "DiscrepancyParams", "SolverConfig", "SolverStats", "State",
    "Trajectory", "integrate", "rhs_enriched", "rhs_glv",
    "solve_implicit_rate",
    "ConfigurationError", "GlvdiscError", "IntegrationError",
    "NegativeStateError", "NoSolutionError", "PredictiveError",
    "StepSizeUnderflow", "SweepError",
    "DramConfig", "LogLikelihood", "PosteriorChain", "PredictiveEnsemble",
    "PriorSpec", "calibrate", "initial_theta", "load_chain", "log_prior",
    "make_log_posterior", "posterior_predictive", "run_dram", "save_chain",
    "DetailedModel", "GenerationConfig", "ReducedModel", "StabilityReport",
    "check_stability", "generate_detailed", "load_model", "save_model",
    "subsample_reduced",
    "ExperimentConfig", "RunResult", "SweepResult",
    "enriched_truth_observations", "load_config", "run_single", "run_sweep",
    "save_config",
    "derive_seed", "make_rng", "seed_sequence",
    "FGammaRow", "GammaReport", "complexity_table_to_csv", "compute_gammas",
    "f_gamma", "f_gamma_table_to_csv", "gamma_value", "relative_complexity",
    "silverman_bandwidth",
]
