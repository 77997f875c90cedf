"""Nonconforming interpolation, enrichment and quasi-interpolation.

All linear operators are available as sparse matrices acting on broken
vertex values (see :mod:`fembounds.fem`), and as scikit-learn style
transformers whose ``fit`` takes a mesh and whose ``transform`` maps
:class:`FeFunction` objects or coefficient arrays of shape
``(n_samples, n_dofs)``.

Enrichment variants
-------------------
``J1``             arithmetic mean of the one-sided values at a node
``angle_weighted`` mean weighted by the interior angle at the node
``node_max``       largest one-sided value (nonlinear)
``node_min``       smallest one-sided value (nonlinear)
``quasi_JQI``      value of an overlap element containing the node, else J1
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import InputError, PreconditionError
from .fem import FeFunction, FeSpace, quadrature_rule
from .mesh import MeshPair
from .validation import check_coefficients, check_fe_function, check_mesh

__all__ = [
    "ENRICHERS",
    "LINEAR_ENRICHERS",
    "EnrichmentKind",
    "inc_matrix",
    "inc_interpolate",
    "enrichment_matrix",
    "enrich",
    "quasi_interpolation_matrix",
    "quasi_interpolate",
    "dqi_matrix",
    "discrete_quasi_interpolate",
    "convex_hull_violation",
    "Enricher",
    "NonconformingInterpolator",
    "QuasiInterpolator",
    "DiscreteQuasiInterpolator",
]

ENRICHERS = ("J1", "angle_weighted", "node_max", "node_min", "quasi_JQI")
LINEAR_ENRICHERS = ("J1", "angle_weighted", "quasi_JQI")
CONSISTENCY_RTOL = 1e-10


@dataclass(frozen=True)
class EnrichmentKind:
    """Enrichment variant plus, for ``quasi_JQI``, the overlap element set."""

    variant: str = "J1"
    overlap: frozenset = None

    def __post_init__(self):
        if self.variant not in ENRICHERS:
            raise InputError(f"unknown enrichment {self.variant!r}; choose from {ENRICHERS}")
        if self.variant == "quasi_JQI":
            if self.overlap is None:
                raise InputError("quasi_JQI needs an overlap element set")
            object.__setattr__(self, "overlap", frozenset(int(k) for k in self.overlap))

    @property
    def linear(self):
        return self.variant in LINEAR_ENRICHERS

    @classmethod
    def coerce(cls, kind, overlap=None):
        if isinstance(kind, cls):
            return kind
        return cls(kind, overlap)


# ------------------------------------------------------------------- I_NC
def inc_matrix(coarse, fine):
    """Side means on ``coarse`` of broken P1 functions on ``fine``.

    Returns a sparse ``(n_sides_coarse, M_fine (n+1))`` matrix.  Each fine
    side inside a coarse side contributes its exact integral; the trace of
    a fine side is averaged over its (one or two) neighbours.
    """
    n = fine.dim
    k = n + 1
    owner = fine.coarse_side_map(coarse) if fine is not coarse else np.arange(fine.n_sides)
    rows, cols, vals = [], [], []
    sel = np.flatnonzero(owner >= 0)
    w_side = fine.side_measures[sel] / coarse.side_measures[owner[sel]]
    for col in (0, 1):
        el = fine.side_elements[sel, col]
        loc = fine.side_local[sel, col]
        present = el >= 0
        both = fine.side_elements[sel, 1] >= 0
        share = np.where(both, 0.5, 1.0)
        for i in range(k):
            on_side = present & (loc != i)
            rows.append(owner[sel][on_side])
            cols.append(el[on_side] * k + i)
            vals.append((w_side * share / n)[on_side])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(coarse.n_sides, fine.n_elements * k))


def _side_quadrature(mesh, degree):
    """Points (S, q, n) and weights (q,) for side means."""
    n = mesh.dim
    P = mesh.coordinates[mesh.sides]
    if n == 2:
        t, w = np.polynomial.legendre.leggauss(max(1, (degree + 2) // 2))
        s = 0.5 * (t + 1.0)
        x = P[:, None, 0, :] * (1 - s)[None, :, None] + P[:, None, 1, :] * s[None, :, None]
        return x, 0.5 * w
    lam, w = quadrature_rule(2, min(degree, 4))
    return np.einsum("qj,sjd->sqd", lam, P), w


def inc_interpolate(target, source, degree=5):
    """Nonconforming interpolation onto a Crouzeix-Raviart space.

    Parameters
    ----------
    target : FeSpace
        ``CR_free`` or ``CR_zero`` space on the coarse mesh.
    source : FeFunction or callable
        P1-type function on the same mesh or on a refinement of it, or a
        callable ``f(x)`` on points ``(K, n)``.
    degree : int
        Exactness degree of the side rule for callables (Gauss points).
    """
    if not isinstance(target, FeSpace) or not target.kind.startswith("CR"):
        raise InputError("target must be a Crouzeix-Raviart space")
    mesh = target.mesh
    if isinstance(source, FeFunction):
        if not source.space.is_p1:
            raise InputError("source must be a scalar P1-type function")
        means = inc_matrix(mesh, source.mesh) @ source.broken_values.ravel()
    elif callable(source):
        x, w = _side_quadrature(mesh, degree)
        vals = np.asarray(source(x.reshape(-1, mesh.dim)), dtype=float).reshape(x.shape[:2])
        means = vals @ w
    else:
        raise InputError("source must be an FeFunction or a callable")
    return FeFunction(target, means[target.dof_entities])


# -------------------------------------------------------------- enrichment
def _s1_space(mesh, free):
    return FeSpace(mesh, "S1_free" if free else "S1_zero")


def enrichment_matrix(mesh, kind="J1", overlap=None, free=False):
    """Sparse map from broken vertex values to S1 coefficients.

    Only linear variants have a matrix.  With ``free=False`` the Dirichlet
    vertices are dropped (value zero).
    """
    kind = EnrichmentKind.coerce(kind, overlap)
    if not kind.linear:
        raise InputError(f"{kind.variant} is nonlinear and has no matrix")
    space = _s1_space(mesh, free)
    k = mesh.dim + 1
    verts = mesh.elements.ravel()
    cols = np.arange(mesh.n_elements * k)
    if kind.variant == "angle_weighted":
        if mesh.dim != 2:
            raise InputError("angle weights are defined in 2D")
        w = mesh.angles.ravel()
    else:
        w = np.ones(len(verts))
    if kind.variant == "quasi_JQI":
        owner = _overlap_owner(mesh, kind.overlap)
        pinned = owner[verts] >= 0
        keep = ~pinned | (np.repeat(np.arange(mesh.n_elements), k) == owner[verts])
        w = np.where(pinned & keep, 1.0, np.where(pinned, 0.0, w))
        verts, cols, w = verts[keep], cols[keep], w[keep]
    total = np.bincount(verts, weights=w, minlength=mesh.n_vertices)
    rows = space.dof_map[verts]
    mask = rows >= 0
    return sp.csr_matrix((w[mask] / total[verts[mask]], (rows[mask], cols[mask])),
                         shape=(space.n_dofs, mesh.n_elements * k)), space


def _overlap_owner(mesh, overlap):
    """Lowest-id overlap element containing each vertex, or -1."""
    owner = np.full(mesh.n_vertices, -1, dtype=np.int64)
    ids = np.array(sorted(overlap), dtype=np.int64)
    if ids.size and (ids[0] < 0 or ids[-1] >= mesh.n_elements):
        raise InputError("overlap element id out of range")
    for e in ids[::-1]:
        owner[mesh.elements[e]] = e
    return owner


def jqi_consistency(mesh, values, overlap, rtol=CONSISTENCY_RTOL):
    """First vertex where overlap elements disagree, or ``None``."""
    ids = sorted(int(e) for e in overlap)
    if not ids:
        return None
    scale = max(1.0, float(np.max(np.abs(values))))
    seen = {}
    for e in ids:
        for i, z in enumerate(mesh.elements[e]):
            z = int(z)
            if z in seen and abs(seen[z] - values[e, i]) > rtol * scale:
                return z
            seen.setdefault(z, values[e, i])
    return None


def jqi_constraints(mesh, overlap):
    """Rows ``v|_K(z) - v|_K'(z)`` (broken indexing) of the consistency hypothesis."""
    k = mesh.dim + 1
    first = {}
    rows, cols, vals = [], [], []
    r = 0
    for e in sorted(int(e) for e in overlap):
        for i, z in enumerate(mesh.elements[e]):
            z = int(z)
            if z in first:
                rows += [r, r]
                cols += [first[z], e * k + i]
                vals += [1.0, -1.0]
                r += 1
            else:
                first[z] = e * k + i
    return sp.csr_matrix((vals, (rows, cols)), shape=(r, mesh.n_elements * k))


def enrich(kind, v, overlap=None, free=False):
    """Conforming companion of a piecewise affine function.

    Parameters
    ----------
    kind : str or EnrichmentKind
    v : FeFunction
        Crouzeix-Raviart (or any P1-type) function.
    overlap : iterable of int, optional
        Overlap elements for ``quasi_JQI``.
    free : bool
        Keep boundary nodes (same nodal rule) instead of setting them to 0.
    """
    kind = EnrichmentKind.coerce(kind, overlap)
    check_fe_function(v)
    mesh = v.mesh
    vals = v.broken_values
    if kind.variant == "quasi_JQI":
        z = jqi_consistency(mesh, vals, kind.overlap)
        if z is not None:
            raise PreconditionError(
                f"J_QI consistency violated at node {z} (coordinates {mesh.coordinates[z].tolist()})")
    if kind.linear:
        E, space = enrichment_matrix(mesh, kind, free=free)
        return FeFunction(space, E @ vals.ravel())
    space = _s1_space(mesh, free)
    out = np.full(mesh.n_vertices, -np.inf if kind.variant == "node_max" else np.inf)
    reducer = np.maximum if kind.variant == "node_max" else np.minimum
    reducer.at(out, mesh.elements.ravel(), vals.ravel())
    return FeFunction(space, out[space.dof_entities])


def convex_hull_violation(v, w):
    """Largest excursion of ``w(z)`` outside the patch value range of ``v``.

    Only nodes where ``w`` is a free dof are checked; zero means the
    convex-hull condition holds everywhere.
    """
    mesh = v.mesh
    vals = v.broken_values.ravel()
    verts = mesh.elements.ravel()
    lo = np.full(mesh.n_vertices, np.inf)
    hi = np.full(mesh.n_vertices, -np.inf)
    np.minimum.at(lo, verts, vals)
    np.maximum.at(hi, verts, vals)
    z = w.space.dof_entities
    wz = w.coefficients
    return float(max(0.0, np.max(lo[z] - wz, initial=0.0), np.max(wz - hi[z], initial=0.0)))


# --------------------------------------------------------- quasi-interpolation
def quasi_interpolation_matrix(coarse, fine, kind="J1", overlap=None, free=False):
    """``J = J_C o I_NC`` from fine broken values to coarse S1 coefficients."""
    cr = FeSpace(coarse, "CR_free")
    E, space = enrichment_matrix(coarse, kind, overlap, free)
    return (E @ cr.broken @ inc_matrix(coarse, fine)).tocsr(), space


def quasi_interpolate(kind, target, v, overlap=None, free=False, degree=5):
    """Quasi-interpolation ``J_C o I_NC`` onto S1 of ``target``.

    ``v`` is a callable or a P1-type function on ``target`` or a refinement.
    """
    check_mesh(target)
    cr = inc_interpolate(FeSpace(target, "CR_free"), v, degree=degree)
    return enrich(kind, cr, overlap=overlap, free=free)


def dqi_matrix(pair, free=False):
    """Discrete quasi-interpolation as a matrix on fine broken values.

    Coarse nodes of overlap elements take the fine value directly (fine and
    coarse vertex numbering agree on the coarse vertices); all other nodes
    use J1 of the nonconforming interpolant.
    """
    coarse, fine = pair.coarse, pair.fine
    J, space = quasi_interpolation_matrix(coarse, fine, "J1", free=free)
    owner = _overlap_owner(coarse, pair.overlap.keys())
    z = space.dof_entities
    pinned = owner[z] >= 0
    if not np.any(pinned):
        return J, space
    k = fine.dim + 1
    fine_el = np.array([pair.overlap[int(e)] for e in owner[z[pinned]]], dtype=np.int64)
    local = np.argmax(fine.elements[fine_el] == z[pinned][:, None], axis=1)
    P = sp.csr_matrix((np.ones(pinned.sum()), (np.flatnonzero(pinned), fine_el * k + local)),
                      shape=J.shape)
    keep = sp.diags((~pinned).astype(float))
    return (keep @ J + P).tocsr(), space


def discrete_quasi_interpolate(pair, v, free=False):
    """``J_dQI``: conforming function on ``pair.fine`` -> S1 on ``pair.coarse``."""
    if not isinstance(pair, MeshPair):
        raise InputError("expected a MeshPair")
    check_fe_function(v)
    if v.mesh is not pair.fine or not v.space.is_conforming:
        raise InputError("discrete quasi-interpolation expects an S1 function on the fine mesh")
    D, space = dqi_matrix(pair, free)
    return FeFunction(space, D @ v.broken_values.ravel())


# ------------------------------------------------------------ estimators
class _MatrixTransformer(TransformerMixin, BaseEstimator):
    """Shared transform: FeFunction in, FeFunction out, or row-wise arrays."""

    def transform(self, X):
        check_is_fitted(self, "matrix_")
        if isinstance(X, FeFunction):
            if X.mesh is not self.input_space_.mesh:
                raise InputError("function lives on a different mesh than the fitted one")
            return FeFunction(self.output_space_, self.matrix_ @ X.broken_values.ravel())
        X = check_coefficients(X, self.input_space_.n_dofs)
        return np.asarray((self.matrix_ @ self.input_space_.broken @ X.T).T)


class Enricher(_MatrixTransformer):
    """Linear enrichment ``CR -> S1`` as a transformer.

    Parameters
    ----------
    kind : {"J1", "angle_weighted", "quasi_JQI"}
    overlap : iterable of int, optional
    free : bool, default False
    input_kind : {"CR_zero", "CR_free"}
        Space whose coefficient rows ``transform`` accepts as arrays.
    """

    def __init__(self, kind="J1", overlap=None, free=False, input_kind="CR_zero"):
        self.kind = kind
        self.overlap = overlap
        self.free = free
        self.input_kind = input_kind

    def fit(self, X, y=None):
        mesh = check_mesh(X)
        self.input_space_ = FeSpace(mesh, self.input_kind)
        self.matrix_, self.output_space_ = enrichment_matrix(mesh, self.kind, self.overlap, self.free)
        return self


class NonconformingInterpolator(TransformerMixin, BaseEstimator):
    """``I_NC`` onto ``CR`` of the fitted mesh.

    ``transform`` accepts FeFunctions on the mesh or a refinement of it and
    callables.
    """

    def __init__(self, target_kind="CR_free", degree=5):
        self.target_kind = target_kind
        self.degree = degree

    def fit(self, X, y=None):
        mesh = check_mesh(X)
        self.space_ = FeSpace(mesh, self.target_kind)
        return self

    def transform(self, X):
        check_is_fitted(self, "space_")
        return inc_interpolate(self.space_, X, degree=self.degree)


class QuasiInterpolator(TransformerMixin, BaseEstimator):
    """``J = J_C o I_NC`` onto S1 of the fitted mesh."""

    def __init__(self, kind="J1", overlap=None, free=False, degree=5):
        self.kind = kind
        self.overlap = overlap
        self.free = free
        self.degree = degree

    def fit(self, X, y=None):
        self.mesh_ = check_mesh(X)
        EnrichmentKind.coerce(self.kind, self.overlap)
        return self

    def transform(self, X):
        check_is_fitted(self, "mesh_")
        return quasi_interpolate(self.kind, self.mesh_, X, overlap=self.overlap,
                                 free=self.free, degree=self.degree)


class DiscreteQuasiInterpolator(_MatrixTransformer):
    """``J_dQI`` for a fitted :class:`MeshPair` (fine S1 -> coarse S1)."""

    def __init__(self, free=False, input_kind="S1_zero"):
        self.free = free
        self.input_kind = input_kind

    def fit(self, X, y=None):
        if not isinstance(X, MeshPair):
            raise InputError("DiscreteQuasiInterpolator.fit expects a MeshPair")
        self.pair_ = X
        self.input_space_ = FeSpace(X.fine, self.input_kind)
        self.matrix_, self.output_space_ = dqi_matrix(X, self.free)
        return self
