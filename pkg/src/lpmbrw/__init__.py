"""Last-progeny-modified branching random walks: constants, simulation, coupling, tests."""

from .coupling import (AtomSet, Centering, LpmSample, extremal_atoms, link_sample,
                       lpm_max_coupled, lpm_max_direct, operator_step, poisson_transform,
                       rde_one_step, rescale_atoms)
from .engine import (Trajectory, derivative_martingale, growth_diagnostics, linear_statistic,
                     max_weight_fraction, rightmost, simulate, weighted_sum_Y,
                     write_summary_csv)
from .inference import (GumbelMomentEstimator, LogCorrectionRegressor, fit_gumbel,
                        fit_log_correction, ks_one_sample, ks_two_sample,
                        spacing_exponentiality)
from .experiments import ExperimentConfig, ExperimentResult, run_experiment
from .laws import MuLaw
from .model import (PointProcessModel, classify_theta, cumulant, cumulant_derivatives,
                    make_model, sigma_sq, solve_theta0, verify_convexity)
from .reports import TestReport
from .rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "AtomSet",
    "Centering",
    "LpmSample",
    "extremal_atoms",
    "link_sample",
    "lpm_max_coupled",
    "lpm_max_direct",
    "operator_step",
    "poisson_transform",
    "rde_one_step",
    "rescale_atoms",
    "Trajectory",
    "derivative_martingale",
    "growth_diagnostics",
    "linear_statistic",
    "max_weight_fraction",
    "rightmost",
    "simulate",
    "weighted_sum_Y",
    "write_summary_csv",
    "GumbelMomentEstimator",
    "LogCorrectionRegressor",
    "fit_gumbel",
    "fit_log_correction",
    "ks_one_sample",
    "ks_two_sample",
    "spacing_exponentiality",
    "ExperimentConfig",
    "ExperimentResult",
    "run_experiment",
    "MuLaw",
    "PointProcessModel",
    "classify_theta",
    "cumulant",
    "cumulant_derivatives",
    "make_model",
    "sigma_sq",
    "solve_theta0",
    "verify_convexity",
    "TestReport",
    "RngStream",
]
