"""Certified constants and adaptive P1 finite elements on simplicial meshes."""
from .afem import AdaptiveSolver, afem_run, estimate, uniform_run
from .constants import ConstantsInput, evaluate_constants
from .errors import (DefinitenessError, DomainError, FemboundsError, GeometryError, InputError,
                     NonconformingMeshError, NumericalFailure, PreconditionError,
                     RefinementError)
from .fem import FeFunction, FeSpace, solve_poisson
from .mesh import MeshPair, Triangulation, l_shape, make_preset, refine_conforming, unit_square
from .operators import (DiscreteQuasiInterpolator, Enricher, NonconformingInterpolator,
                        QuasiInterpolator)
from .verify import run_suite

__version__ = "0.1.0"

__all__ = [
    "AdaptiveSolver", "ConstantsInput", "DefinitenessError", "DiscreteQuasiInterpolator",
    "DomainError", "Enricher", "FeFunction", "FeSpace", "FemboundsError", "GeometryError",
    "InputError", "MeshPair", "NonconformingInterpolator", "NonconformingMeshError",
    "NumericalFailure", "PreconditionError", "QuasiInterpolator", "RefinementError",
    "Triangulation", "afem_run", "estimate", "evaluate_constants", "l_shape", "make_preset",
    "refine_conforming", "run_suite", "solve_poisson", "uniform_run", "unit_square",
]
