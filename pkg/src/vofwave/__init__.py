"""Energy-based discontinuous Galerkin solver for wave equations with a
variable-order Caputo damping term, with L2-1sigma time stepping."""

from .errors import DiagnosticFailure, NumericalFailure
from .harness import ConfigError, RunConfig, make_config, run_single, run_sweep
from .kernel import VariableOrder, compute_weights, solve_sigma
from .manufactured import get_solution
from .mesh import build_mesh
from .space import FluxParams, assemble_space
from .stepper import run

__all__ = [
    "ConfigError",
    "DiagnosticFailure",
    "FluxParams",
    "NumericalFailure",
    "RunConfig",
    "VariableOrder",
    "assemble_space",
    "build_mesh",
    "compute_weights",
    "get_solution",
    "make_config",
    "run",
    "run_single",
    "run_sweep",
    "solve_sigma",
]
