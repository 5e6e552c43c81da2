"""Reflected backward SDEs with two regulated barriers on a binomial tree."""

__version__ = "0.1.0"

from .errors import (
    EnumerationBudgetError,
    InvalidScenarioError,
    IterationLimitError,
    NotAMartingaleError,
    SolverError,
)
from .generators import GeneratorSpec, implicit_step, verify_assumptions
from .grid_paths import FVPath, RegulatedPath, TimeGrid
from .lattice import BinomialTree, StoppingTime, TreeFV, TreeProcess, snell_envelope
from .rbsde_two import dynkin_oracle, picard_solve, solve_clamped, solve_decoupled, verify_solution

__all__ = [
    "BinomialTree",
    "EnumerationBudgetError",
    "FVPath",
    "GeneratorSpec",
    "InvalidScenarioError",
    "IterationLimitError",
    "NotAMartingaleError",
    "RegulatedPath",
    "SolverError",
    "StoppingTime",
    "TimeGrid",
    "TreeFV",
    "TreeProcess",
    "dynkin_oracle",
    "implicit_step",
    "picard_solve",
    "snell_envelope",
    "solve_clamped",
    "solve_decoupled",
    "verify_assumptions",
    "verify_solution",
]
