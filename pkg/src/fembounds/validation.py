"""Input validation helpers shared by the public entry points."""
import numpy as np
from sklearn.utils.validation import check_array

from .errors import InputError
from .mesh import Triangulation


def check_mesh(mesh, dim=None):
    """Return ``mesh`` if it is a :class:`Triangulation` of dimension ``dim``."""
    if not isinstance(mesh, Triangulation):
        raise InputError(f"expected a Triangulation, got {type(mesh).__name__}")
    if dim is not None and mesh.dim != dim:
        raise InputError(f"expected a {dim}D mesh, got {mesh.dim}D")
    return mesh


def check_fe_function(v, kinds=None):
    from .fem import FeFunction

    if not isinstance(v, FeFunction):
        raise InputError(f"expected an FeFunction, got {type(v).__name__}")
    if kinds is not None and v.kind not in kinds:
        raise InputError(f"expected a function in {kinds}, got {v.kind}")
    return v


def check_coefficients(X, n_dofs):
    """Coefficient rows as a 2D float array with ``n_dofs`` columns."""
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n_dofs:
        raise InputError(f"expected {n_dofs} coefficients per row, got {X.shape[1]}")
    return X


def check_theta(theta):
    theta = float(theta)
    if not 0.0 < theta <= 1.0:
        raise InputError("bulk parameter theta must lie in (0, 1]")
    return theta


def check_rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
