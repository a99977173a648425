"""Numerical laboratory for blowup of u_t - lap u = |u|^{p-1} u with zero Dirichlet data."""
__version__ = "0.1.0"

from .exceptions import BlowupLabError, BracketError, BudgetExhausted, ConfigError, DataRangeError
from .mesh import DomainSpec, Grid, build_grid
from .integrator import (ModelParams, OmegaEstimate, SolverConfig, StopReason, Trajectory,
                         estimate_omega, kappa, load_trajectory, run, save_trajectory)
from .energy import classify_collapse, derived_constants, dissipation_audit, energy
from .rate import RateClassifier, classify_type, rate_curve
from .selfsim import SelfSimilarTransformer, local_energy, local_energy_series, rescale
from .regularity import RegularityConfig, SingularSetScanner, covering_dimension, extract_singular_set
from .scenarios import (CATALOGUE, BlowupSimulator, CollapseClassifier, DatumSpec, ScenarioSpec,
                        analyze, bisect_borderline, run_scenario)

__all__ = [
    "__version__",
    "BlowupLabError", "BracketError", "BudgetExhausted", "ConfigError", "DataRangeError",
    "DomainSpec", "Grid", "build_grid",
    "ModelParams", "OmegaEstimate", "SolverConfig", "StopReason", "Trajectory",
    "estimate_omega", "kappa", "load_trajectory", "run", "save_trajectory",
    "classify_collapse", "derived_constants", "dissipation_audit", "energy",
    "RateClassifier", "classify_type", "rate_curve",
    "SelfSimilarTransformer", "local_energy", "local_energy_series", "rescale",
    "RegularityConfig", "SingularSetScanner", "covering_dimension", "extract_singular_set",
    "CATALOGUE", "BlowupSimulator", "CollapseClassifier", "DatumSpec", "ScenarioSpec",
    "analyze", "bisect_borderline", "run_scenario",
]
