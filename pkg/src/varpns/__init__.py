"""Finite element convergence studies for unsteady p(t, x)-Stokes and
p(t, x)-Navier--Stokes flow with MINI and Taylor--Hood elements."""
from .analysis import ErrorReport, LevelErrors, eoc, error_quantities, expected_rate
from .assembly import Discretization, StepProblem, StepState
from .fem import ConfigurationError, ElementPair, build_dof_map, quadrature_rule
from .manufactured import FractionalCase, PolynomialCase
from .mesh import Triangulation, refine, refine_to, unit_square_initial
from .solver import StepFailure, TimeGrid, time_march
from .varexp import ExponentField, StressModel, luxembourg_norm, modular, stress

__all__ = [
    "ConfigurationError", "Discretization", "ElementPair", "ErrorReport",
    "ExponentField", "FractionalCase", "LevelErrors", "PolynomialCase",
    "StepFailure", "StepProblem", "StepState", "StressModel", "TimeGrid",
    "Triangulation", "build_dof_map", "eoc", "error_quantities", "expected_rate",
    "luxembourg_norm", "modular", "quadrature_rule", "refine", "refine_to",
    "stress", "time_march", "unit_square_initial",
]

__version__ = "0.1.0"
