"""Optimal heat-source control of a nonisothermal Cahn-Hilliard system.

Forward solves, linearized and adjoint solves, the reduced gradient and a
projected-gradient optimizer over box-constrained controls, plus a battery of
verification checks.
"""

__version__ = "0.1.0"

from .errors import (
    CHControlError,
    ConfigError,
    ConformanceError,
    LineSearchError,
    PotentialDomainError,
    PreconditionError,
    SensitivityError,
    SeparationError,
    SolverError,
    StateSolveError,
)
from .geometry import Grid, TimeGrid, inverse_neumann, laplacian_neumann, mean
from .optimizer import (
    ControlBounds,
    ControlProblem,
    OptimizeConfig,
    OptimizeTrace,
    cost,
    optimize,
    project,
    reduced_gradient,
    stationarity_residual,
)
from .potentials import F_eval, F_eval_clipped, PotentialSpec, separation_report, validate_compatibility
from .sensitivity import CostData, solve_adjoint, solve_linearized
from .state import InitialData, NewtonConfig, PhysicalParams, StateTrajectory, solve_state, temperature

__all__ = [
    "CHControlError",
    "ConfigError",
    "ConformanceError",
    "ControlBounds",
    "ControlProblem",
    "CostData",
    "F_eval",
    "F_eval_clipped",
    "Grid",
    "InitialData",
    "LineSearchError",
    "NewtonConfig",
    "OptimizeConfig",
    "OptimizeTrace",
    "PhysicalParams",
    "PotentialDomainError",
    "PotentialSpec",
    "PreconditionError",
    "SensitivityError",
    "SeparationError",
    "SolverError",
    "StateSolveError",
    "StateTrajectory",
    "TimeGrid",
    "cost",
    "inverse_neumann",
    "laplacian_neumann",
    "mean",
    "optimize",
    "project",
    "reduced_gradient",
    "separation_report",
    "solve_adjoint",
    "solve_linearized",
    "solve_state",
    "stationarity_residual",
    "temperature",
    "validate_compatibility",
]
