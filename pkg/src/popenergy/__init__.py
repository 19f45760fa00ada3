"""Energy-constrained population coding: optima, simulation, analysis."""

__version__ = "0.1.0"

from .analytic import (Objective, PopulationSolution,
                       reduce_to_capacity_model, reduce_to_mean_rate_model,
                       solve_optimal_code)
from .compare import (ComparisonReport, PriorStudy, flattening_report,
                      prior_stress_study, stress_energy_scale)
from .grids import Prior, RateTarget, StimulusGrid
from .neuron import (CalibrationResult, CellRecord, MembraneConfig,
                     SimConfig, SweepResult, SynapseConfig, calibrate_gsyn,
                     estimate_stats, simulate_trial, spike_train_moments,
                     sweep_grid)
from .paths import (CellStateTable, DispersionModel, KappaTrends,
                    OptimalPath, PathAnalysis, build_cell_table,
                    build_dispersion_model, compute_fwhm, fit_cell_surfaces,
                    fit_kappa_trends, optimal_path, run_path_analysis)
from .tuning import (TuningCurveBank, approx_fisher, build_tuning_bank,
                     exact_fisher, homeostasis_residual)
from .widths import bank_fwhm, fwhm

__all__ = [
    "__version__",
    "CalibrationResult", "CellRecord", "CellStateTable", "ComparisonReport",
    "DispersionModel", "KappaTrends", "MembraneConfig", "Objective",
    "OptimalPath", "PathAnalysis", "PopulationSolution", "Prior",
    "PriorStudy", "RateTarget", "SimConfig", "StimulusGrid", "SweepResult",
    "SynapseConfig", "TuningCurveBank",
    "approx_fisher", "bank_fwhm", "build_cell_table",
    "build_dispersion_model", "build_tuning_bank", "calibrate_gsyn",
    "compute_fwhm", "estimate_stats", "exact_fisher", "fit_cell_surfaces",
    "fit_kappa_trends", "flattening_report", "fwhm", "homeostasis_residual",
    "optimal_path", "prior_stress_study", "reduce_to_capacity_model",
    "reduce_to_mean_rate_model", "run_path_analysis", "simulate_trial",
    "solve_optimal_code", "spike_train_moments", "stress_energy_scale",
    "sweep_grid",
]
