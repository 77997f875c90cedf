"""Exception hierarchy shared by all modules."""


class FemboundsError(Exception):
    """Base class for every error raised by this package."""


class InputError(FemboundsError, ValueError):
    """Invalid user input (bad shapes, out-of-range parameters)."""


class GeometryError(InputError):
    """Degenerate or inconsistent geometry."""


class NonconformingMeshError(InputError):
    """A mesh operation requires a conforming triangulation."""


class RefinementError(FemboundsError):
    """Closure of a refinement did not terminate (invalid initial tagging)."""


class PreconditionError(InputError):
    """An operator precondition is violated by the given data."""


class DomainError(InputError):
    """A closed-form constant was requested outside its domain of validity."""


class NumericalFailure(FemboundsError, ArithmeticError):
    """An iterative numerical method failed to converge."""


class DefinitenessError(NumericalFailure):
    """A matrix that must be positive definite is not."""
