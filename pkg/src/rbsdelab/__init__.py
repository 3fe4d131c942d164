"""Penalized and reflected backward-SDE solvers on recombining lattices.

Public surface: problem definitions and validation, the Bernoulli lattice
with exact conditional-expectation operators, the penalized/reflected/
Cole-Hopf solvers, a least-squares Monte Carlo backend, structural
diagnostics, and config-driven convergence experiments.
"""
from ._version import __version__
from .diagnostics import (RateReport, bmo_estimate, fit_rate, kappa_bound_check,
                          penalty_violation, skorohod_residual)
from .errors import ConfigurationError, NumericalAbort
from .experiments import (ExperimentConfig, ExperimentReport, SweepPoint, emit,
                          parse_config_file, parse_config_text, run_coupled_sweep,
                          run_discretization_sweep, run_penalization_sweep,
                          run_single_solve, run_validation)
from .lattice import (Lattice, LevelValues, TimeGrid, build_lattice, cond_expect,
                      cond_martingale_coeff, expectation_of_sum)
from .mc import (PathBundle, PathSolution, RegressionBasis, hp_error, lsmc_solve,
                 simulate_paths, sp_error)
from .problem import (AssumptionCheck, Barrier, Generator, ProblemSpec,
                      TerminalCondition, ValidationReport, builtin_problems,
                      make_problem, validate_assumptions)
from .solver import (DiscreteSolution, FreezeGap, PenaltyConfig,
                     backward_step_explicit, backward_step_implicit_penalty,
                     cole_hopf_oracle, freeze_gap, penalized_generator,
                     solve_penalized, solve_reflected)

__all__ = [
    "__version__",
    "AssumptionCheck", "Barrier", "ConfigurationError", "DiscreteSolution",
    "ExperimentConfig", "ExperimentReport", "FreezeGap", "Generator", "Lattice",
    "LevelValues", "NumericalAbort", "PathBundle", "PathSolution", "PenaltyConfig",
    "ProblemSpec", "RateReport", "RegressionBasis", "SweepPoint", "TerminalCondition",
    "TimeGrid", "ValidationReport",
    "backward_step_explicit", "backward_step_implicit_penalty", "bmo_estimate",
    "build_lattice", "builtin_problems", "cole_hopf_oracle", "cond_expect",
    "cond_martingale_coeff", "emit", "expectation_of_sum", "fit_rate", "freeze_gap",
    "hp_error", "kappa_bound_check", "lsmc_solve", "make_problem",
    "parse_config_file", "parse_config_text", "penalized_generator",
    "penalty_violation", "run_coupled_sweep", "run_discretization_sweep",
    "run_penalization_sweep", "run_single_solve", "run_validation",
    "simulate_paths", "skorohod_residual", "solve_penalized", "solve_reflected",
    "sp_error", "validate_assumptions",
]
