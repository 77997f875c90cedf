"""Lowest-order finite element spaces on simplicial meshes.

Every P1-type function (conforming, Crouzeix-Raviart or broken) is handled
through its *broken vertex values*: an array of shape ``(M, n + 1)`` with
the value of the function at each local vertex of each element.  A space is
described by the sparse matrix mapping its coefficients to these values, so
mass and stiffness matrices, norms and transfer operators all reduce to
block-diagonal element matrices sandwiched by that map.

The Crouzeix-Raviart basis function of local side ``j`` (opposite vertex
``j``) is ``1 - n * lambda_j``.
"""
import math
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GeometryError, InputError, NonconformingMeshError
from .numerics import cg_solve

__all__ = [
    "SPACE_KINDS",
    "FeSpace",
    "FeFunction",
    "broken_operator",
    "local_mass",
    "block_mass",
    "block_stiffness",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load",
    "solve_poisson",
    "p0_project",
    "integral_mean",
    "broken_l2_sq",
    "broken_energy_sq",
    "element_l2_sq",
    "quadrature_rule",
    "monomial_integral",
    "prolongation_matrix",
    "prolong",
    "trace_identity_check",
]

SPACE_KINDS = ("S1_zero", "S1_free", "CR_zero", "CR_free", "P0_scalar", "P0_vector", "P1_broken")
_P1_KINDS = ("S1_zero", "S1_free", "CR_zero", "CR_free", "P0_scalar", "P1_broken")


def _ensure_conforming(mesh):
    if getattr(mesh, "_fem_checked", False):
        return
    try:
        mesh.validate()
    except NonconformingMeshError as exc:
        raise NonconformingMeshError(f"assembly refused: {exc}") from exc
    mesh._fem_checked = True


class FeSpace:
    """Degree-of-freedom map of a lowest-order space.

    Parameters
    ----------
    mesh : Triangulation
    kind : str
        ``S1_zero``/``S1_free`` (vertex dofs), ``CR_zero``/``CR_free``
        (side dofs), ``P0_scalar``, ``P0_vector`` (element dofs) or
        ``P1_broken`` (one dof per local vertex).  The ``_zero`` variants
        drop the dofs on Dirichlet vertices or sides.
    """

    def __init__(self, mesh, kind):
        if kind not in SPACE_KINDS:
            raise InputError(f"unknown space kind {kind!r}; choose from {SPACE_KINDS}")
        _ensure_conforming(mesh)
        self.mesh = mesh
        self.kind = kind
        if kind.startswith("S1"):
            keep = mesh.used_vertices.copy()
            if kind == "S1_zero":
                keep &= ~mesh.dirichlet_vertices
            self.entity = "vertex"
        elif kind.startswith("CR"):
            keep = np.ones(mesh.n_sides, dtype=bool)
            if kind == "CR_zero":
                keep &= ~mesh.dirichlet_mask
            self.entity = "side"
        else:
            keep = np.ones(mesh.n_elements, dtype=bool)
            self.entity = "element"
        dof_map = -np.ones(len(keep), dtype=np.int64)
        dof_map[keep] = np.arange(int(keep.sum()))
        self.dof_map = dof_map
        self.dof_entities = np.flatnonzero(keep)
        for arr in (self.dof_map, self.dof_entities):
            arr.setflags(write=False)

    @property
    def n_dofs(self):
        if self.kind == "P0_vector":
            return self.mesh.n_elements * self.mesh.dim
        if self.kind == "P1_broken":
            return self.mesh.n_elements * (self.mesh.dim + 1)
        return len(self.dof_entities)

    @property
    def is_conforming(self):
        return self.kind.startswith("S1")

    @property
    def is_p1(self):
        return self.kind in _P1_KINDS

    @cached_property
    def broken(self):
        """Sparse map from coefficients to flattened broken vertex values."""
        return broken_operator(self)

    def zero(self):
        return FeFunction(self, np.zeros(self.n_dofs))

    def interpolate(self, func):
        """Nodal (S1, P1_broken), side-midpoint (CR) or centroid (P0) interpolant."""
        mesh = self.mesh
        if self.kind.startswith("S1"):
            x = mesh.coordinates[self.dof_entities]
        elif self.kind.startswith("CR"):
            x = mesh.side_midpoints[self.dof_entities]
        elif self.kind == "P1_broken":
            x = mesh.element_points().reshape(-1, mesh.dim)
        else:
            x = mesh.element_points().mean(axis=1)
        vals = np.asarray(func(x), dtype=float)
        if self.kind == "P0_vector":
            return FeFunction(self, vals.reshape(-1))
        return FeFunction(self, vals.reshape(-1))

    def __repr__(self):
        return f"FeSpace({self.kind}, n_dofs={self.n_dofs})"


class FeFunction:
    """Coefficient vector in an :class:`FeSpace`."""

    def __init__(self, space, coefficients):
        c = np.array(coefficients, dtype=float).reshape(-1)
        if c.shape != (space.n_dofs,):
            raise InputError(f"expected {space.n_dofs} coefficients, got {c.size}")
        self.space = space
        self.coefficients = c

    @property
    def mesh(self):
        return self.space.mesh

    @property
    def kind(self):
        return self.space.kind

    @cached_property
    def broken_values(self):
        """Values at the local vertices of every element, shape (M, n + 1)."""
        if self.kind == "P0_vector":
            raise InputError("vector fields have no scalar vertex values")
        n = self.mesh.dim
        return (self.space.broken @ self.coefficients).reshape(-1, n + 1)

    @cached_property
    def gradients(self):
        """Elementwise (broken) gradient, shape (M, n)."""
        if self.kind == "P0_vector":
            return self.coefficients.reshape(-1, self.mesh.dim)
        if self.kind == "P0_scalar":
            return np.zeros((self.mesh.n_elements, self.mesh.dim))
        return np.einsum("kj,kjd->kd", self.broken_values, self.mesh.barycentric_gradients)

    @property
    def element_means(self):
        return p0_project(self)

    def vertex_values(self):
        """Nodal values of a conforming function (zero on dropped vertices)."""
        if not self.space.is_conforming:
            raise InputError("vertex values need a conforming space")
        out = np.zeros(self.mesh.n_vertices)
        out[self.space.dof_entities] = self.coefficients
        return out

    def l2_norm(self):
        if self.kind == "P0_vector":
            return math.sqrt(float(np.sum(self.mesh.volumes[:, None] * self.gradients ** 2)))
        return math.sqrt(broken_l2_sq(self.mesh, self.broken_values))

    def energy_norm(self):
        return math.sqrt(broken_energy_sq(self.mesh, self.gradients))

    def _coerce(self, other):
        if not isinstance(other, FeFunction) or other.space is not self.space:
            raise InputError("arithmetic needs functions from the same space object")
        return other.coefficients

    def __add__(self, other):
        return FeFunction(self.space, self.coefficients + self._coerce(other))

    def __sub__(self, other):
        return FeFunction(self.space, self.coefficients - self._coerce(other))

    def __mul__(self, alpha):
        return FeFunction(self.space, float(alpha) * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self):
        return FeFunction(self.space, -self.coefficients)

    def __repr__(self):
        return f"FeFunction({self.kind}, n_dofs={self.space.n_dofs})"


# ------------------------------------------------------------ element level
def broken_operator(space):
    """Sparse matrix ``(M (n+1), n_dofs)``: coefficients -> vertex values."""
    mesh = space.mesh
    n = mesh.dim
    k = n + 1
    M = mesh.n_elements
    rows = np.arange(M * k).reshape(M, k)
    if space.kind == "P0_vector":
        raise InputError("vector fields have no broken scalar representation")
    if space.kind == "P1_broken":
        return sp.identity(M * k, format="csr")
    if space.kind == "P0_scalar":
        cols = np.repeat(np.arange(M), k)
        return sp.csr_matrix((np.ones(M * k), (rows.ravel(), cols)), shape=(M * k, M))
    if space.kind.startswith("S1"):
        cols = space.dof_map[mesh.elements]
        mask = cols >= 0
        return sp.csr_matrix((np.ones(mask.sum()), (rows[mask], cols[mask])),
                             shape=(M * k, space.n_dofs))
    # CR: value at local vertex i is sum_j c_j (1 - n delta_ij)
    cols = space.dof_map[mesh.element_sides]  # (M, k) indexed by local side j
    local = 1.0 - n * np.eye(k)  # [i, j]
    R = np.broadcast_to(rows[:, :, None], (M, k, k))
    C = np.broadcast_to(cols[:, None, :], (M, k, k))
    V = np.broadcast_to(local[None], (M, k, k))
    mask = C >= 0
    return sp.csr_matrix((V[mask], (R[mask], C[mask])), shape=(M * k, space.n_dofs))


def local_mass(n):
    """P1 mass matrix of a simplex of unit volume."""
    return (np.ones((n + 1, n + 1)) + np.eye(n + 1)) / ((n + 1) * (n + 2))


def _block(blocks):
    M, k, _ = blocks.shape
    idx = np.arange(M * k).reshape(M, k)
    rows = np.broadcast_to(idx[:, :, None], (M, k, k)).ravel()
    cols = np.broadcast_to(idx[:, None, :], (M, k, k)).ravel()
    return sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(M * k, M * k))


def block_mass(mesh, weights=None):
    """Block-diagonal broken P1 mass matrix, optionally weighted per element."""
    w = mesh.volumes if weights is None else mesh.volumes * np.asarray(weights, dtype=float)
    return _block(w[:, None, None] * local_mass(mesh.dim)[None])


def block_stiffness(mesh, weights=None):
    """Block-diagonal broken P1 stiffness matrix."""
    G = mesh.barycentric_gradients
    w = mesh.volumes if weights is None else mesh.volumes * np.asarray(weights, dtype=float)
    return _block(w[:, None, None] * np.einsum("kid,kjd->kij", G, G))


def broken_l2_sq(mesh, values, weights=None):
    """Squared L2 norm of a broken P1 function given by vertex values.

    Uses ``int_T (sum_i v_i lambda_i)^2 = |T| (sum v_i^2 + (sum v_i)^2) / ((n+1)(n+2))``.
    """
    v = np.asarray(values, dtype=float)
    n = mesh.dim
    per = mesh.volumes * (np.sum(v * v, axis=1) + np.sum(v, axis=1) ** 2) / ((n + 1) * (n + 2))
    if weights is not None:
        per = per * weights
    return float(per.sum())


def broken_energy_sq(mesh, gradients, weights=None):
    per = mesh.volumes * np.sum(np.asarray(gradients) ** 2, axis=1)
    if weights is not None:
        per = per * weights
    return float(per.sum())


# ---------------------------------------------------------------- quadrature
def monomial_integral(alpha, volume=1.0):
    """``int_T prod lambda_j^alpha_j = |T| n! alpha! / (n + |alpha|)!``."""
    alpha = [int(a) for a in alpha]
    if any(a < 0 for a in alpha):
        raise InputError("exponents must be nonnegative")
    n = len(alpha) - 1
    num = math.factorial(n) * math.prod(math.factorial(a) for a in alpha)
    return volume * num / math.factorial(n + sum(alpha))


def _perms(p):
    out = []
    for q in (p, (p[1], p[2], p[0]), (p[2], p[0], p[1])):
        if q not in out:
            out.append(q)
    return out


def quadrature_rule(n, degree=4):
    """Symmetric rule on the reference simplex (barycentric points, weights).

    Weights sum to one; integrals are ``|T| * sum w f(x)``.
    """
    if n == 2:
        if degree <= 1:
            return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
        if degree == 2:
            pts = np.array(_perms((2 / 3, 1 / 6, 1 / 6)))
            return pts, np.full(3, 1 / 3)
        if degree <= 4:
            a, b = 0.445948490915965, 0.091576213509771
            pts = _perms((1 - 2 * a, a, a)) + _perms((1 - 2 * b, b, b))
            w = [0.223381589678011] * 3 + [0.109951743655322] * 3
            return np.array(pts), np.array(w)
    elif n == 3:
        if degree <= 1:
            return np.full((1, 4), 0.25), np.array([1.0])
        if degree == 2:
            a, b = 0.5854101966249685, 0.1381966011250105
            pts = [[b] * i + [a] + [b] * (3 - i) for i in range(4)]
            return np.array(pts), np.full(4, 0.25)
    raise InputError(f"no quadrature rule of degree {degree} in dimension {n}")


def _eval(f, x):
    out = np.asarray(f(x), dtype=float)
    if out.shape != x.shape[:1]:
        out = np.broadcast_to(out, x.shape[:1])
    return out


def _callable_points(mesh, degree):
    lam, w = quadrature_rule(mesh.dim, degree)
    x = np.einsum("qj,kjd->kqd", lam, mesh.element_points())
    return lam, w, x


def element_l2_sq(mesh, f, degree=4):
    """``||f||^2_{L2(T)}`` per element (exact unless ``f`` is callable)."""
    if isinstance(f, FeFunction):
        if f.mesh is not mesh:
            raise InputError("function lives on a different mesh")
        if f.kind == "P0_vector":
            return mesh.volumes * np.sum(f.gradients ** 2, axis=1)
        v = f.broken_values
        n = mesh.dim
        return mesh.volumes * (np.sum(v * v, axis=1) + np.sum(v, axis=1) ** 2) / ((n + 1) * (n + 2))
    if callable(f):
        _, w, x = _callable_points(mesh, degree)
        vals = _eval(f, x.reshape(-1, mesh.dim)).reshape(x.shape[:2])
        return mesh.volumes * (vals ** 2 @ w)
    c = np.broadcast_to(np.asarray(f, dtype=float), (mesh.n_elements,))
    return mesh.volumes * c ** 2


def _broken_load(mesh, f, degree):
    """``int_T f lambda_i`` per element and local vertex, shape (M, n + 1)."""
    n = mesh.dim
    if isinstance(f, FeFunction):
        if f.mesh is not mesh:
            raise InputError("load function lives on a different mesh")
        if f.kind == "P0_vector":
            raise InputError("load must be scalar")
        v = f.broken_values
        return mesh.volumes[:, None] * (v @ local_mass(n))
    if callable(f):
        lam, w, x = _callable_points(mesh, degree)
        vals = _eval(f, x.reshape(-1, n)).reshape(x.shape[:2])
        return mesh.volumes[:, None] * ((vals * w) @ lam)
    c = np.asarray(f, dtype=float)
    if c.ndim == 0 or c.shape == (mesh.n_elements,):
        c = np.broadcast_to(c, (mesh.n_elements,))
        return np.repeat((c * mesh.volumes / (n + 1))[:, None], n + 1, axis=1)
    raise InputError("load must be a scalar, per-element constants, FeFunction or callable")


# ------------------------------------------------------------------ assembly
def assemble_stiffness(space):
    """``(grad_NC u, grad_NC v)`` on a P1-type space (CSR)."""
    if not space.is_p1:
        raise InputError("stiffness needs a P1-type space")
    B = space.broken
    return (B.T @ block_stiffness(space.mesh) @ B).tocsr()


def assemble_mass(space):
    """L2 mass matrix (CSR)."""
    mesh = space.mesh
    if space.kind == "P0_vector":
        return sp.diags(np.repeat(mesh.volumes, mesh.dim)).tocsr()
    B = space.broken
    return (B.T @ block_mass(mesh) @ B).tocsr()


def assemble_load(space, f, degree=4):
    """``(f, v)`` for every basis function ``v``.

    ``f`` is a scalar, an array of per-element constants, an
    :class:`FeFunction` on the same mesh (integrated exactly) or a callable
    ``f(x)`` on points of shape ``(K, n)`` (quadrature of ``degree``).
    """
    if not space.is_p1:
        raise InputError("load vector needs a P1-type space")
    b = _broken_load(space.mesh, f, degree).ravel()
    return space.broken.T @ b


def solve_poisson(space, f, solver="cg", tol=1e-12, degree=4):
    """Galerkin solution of ``-Laplace u = f`` with homogeneous Dirichlet data.

    ``space`` must be ``S1_zero`` or ``CR_zero``.  ``solver`` is ``"cg"``
    (diagonally preconditioned) or ``"direct"`` (sparse LU).
    """
    if space.kind not in ("S1_zero", "CR_zero"):
        raise InputError("solve_poisson needs a zero-boundary space")
    if space.n_dofs == 0:
        return space.zero()
    A = assemble_stiffness(space)
    b = assemble_load(space, f, degree=degree)
    if solver == "cg":
        x = cg_solve(A, b, tol=tol)
    elif solver == "direct":
        x = spla.spsolve(A.tocsc(), b)
    else:
        raise InputError(f"unknown solver {solver!r}")
    return FeFunction(space, x)


# ---------------------------------------------------------------- projection
def p0_project(obj):
    """Elementwise integral means.

    For a scalar P1-type function the result has shape ``(M,)``; for a
    gradient field (``P0_vector`` function or array ``(M, n)``) it is the
    field itself.
    """
    if isinstance(obj, FeFunction):
        if obj.kind == "P0_vector":
            return obj.gradients.copy()
        return obj.broken_values.mean(axis=1)
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 2:
        return arr.copy()
    raise InputError("p0_project expects an FeFunction or an (M, n) gradient field")


def integral_mean(fn, region=None):
    """Mean of ``fn`` over a union of elements (default: the whole mesh)."""
    mesh = fn.mesh
    ids = np.arange(mesh.n_elements) if region is None else np.unique(np.asarray(region, dtype=np.int64))
    if ids.size == 0:
        raise InputError("integral mean over an empty region is undefined")
    vol = mesh.volumes[ids]
    means = p0_project(fn)[ids]
    if means.ndim == 2:
        return (vol[:, None] * means).sum(axis=0) / vol.sum()
    return float(vol @ means / vol.sum())


# ------------------------------------------------------------ mesh transfer
def prolongation_matrix(coarse, fine, ancestor):
    """Sparse map of coarse broken P1 values to fine broken values.

    A coarse element is affine on each descendant, so the representation is
    exact: fine vertex value ``= sum_j lambda_j(x) v_j``.
    """
    n = fine.dim
    k = n + 1
    ancestor = np.asarray(ancestor, dtype=np.int64)
    G = coarse.barycentric_gradients[ancestor]  # (Mf, k, n)
    P0 = coarse.coordinates[coarse.elements[ancestor, 0]]  # (Mf, n)
    X = fine.element_points()  # (Mf, k, n)
    lam = np.einsum("kjd,kid->kij", G, X - P0[:, None, :])
    lam[:, :, 0] += 1.0
    lam[np.abs(lam) < 1e-15] = 0.0
    Mf = fine.n_elements
    rows = np.broadcast_to(np.arange(Mf * k).reshape(Mf, k)[:, :, None], (Mf, k, k))
    cols = np.broadcast_to((ancestor[:, None] * k + np.arange(k))[:, None, :], (Mf, k, k))
    return sp.csr_matrix((lam.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(Mf * k, coarse.n_elements * k))


def prolong(fn, pair):
    """Exact representation of a coarse P1-type function on ``pair.fine``."""
    if fn.mesh is not pair.coarse:
        raise InputError("function does not live on the coarse mesh")
    P = prolongation_matrix(pair.coarse, pair.fine, pair.ancestor)
    space = FeSpace(pair.fine, "P1_broken")
    return FeFunction(space, P @ fn.broken_values.ravel())


# --------------------------------------------------------- trace identity
def trace_identity_check(mesh, v, P, E):
    """Both sides of the discrete trace identity on a triangulated simplex.

    ``mesh`` triangulates ``T = conv{E, P}`` whose vertices are mesh vertices
    ``0..n``; ``P`` is a vertex index and ``E`` the tuple of the ``n``
    remaining vertex indices.  ``v`` is a P1-type function on ``mesh``.

    Returns ``(side_mean, volume_expression)`` with the volume expression
    ``mean_T v + (1/n) mean_T (x - P) . grad_NC v``.
    """
    n = mesh.dim
    E = tuple(sorted(int(i) for i in E))
    P = int(P)
    if len(E) != n or P in E or set(E) | {P} != set(range(n + 1)):
        raise GeometryError("P and E must be a vertex and its opposite side of the root simplex")
    if v.mesh is not mesh:
        raise InputError("function lives on a different mesh")
    root = mesh.coordinates[: n + 1]
    from .mesh import simplex_volume
    vol_T = simplex_volume(root)
    if abs(vol_T - mesh.volumes.sum()) > 1e-12 * vol_T:
        raise GeometryError("mesh does not triangulate the simplex spanned by vertices 0..n")
    sup = mesh.vertex_supports(n + 1)
    Eset = frozenset(E)
    vals = v.broken_values
    side_sum = 0.0
    side_meas = 0.0
    for s in np.flatnonzero(mesh.boundary_sides):
        verts = mesh.sides[s]
        if not frozenset().union(*(sup[int(w)] for w in verts)) <= Eset:
            continue
        k, j = mesh.side_elements[s, 0], mesh.side_local[s, 0]
        mean = (vals[k].sum() - vals[k, j]) / n
        side_sum += mesh.side_measures[s] * mean
        side_meas += mesh.side_measures[s]
    if side_meas == 0.0:
        raise GeometryError("side E carries no mesh sides")
    lhs = side_sum / side_meas
    vol = mesh.volumes
    centroid = mesh.element_points().mean(axis=1)
    mean_v = float(vol @ vals.mean(axis=1)) / vol_T
    flux = float(vol @ np.sum((centroid - mesh.coordinates[P]) * v.gradients, axis=1)) / vol_T
    return lhs, mean_v + flux / n
