"""Simplicial meshes with tagged newest-vertex bisection.

A simplex is an ordered vertex tuple ``(x0, ..., xn)`` whose refinement edge
is ``x0 -- xn``.  Bisection of a simplex of type ``g`` inserts the edge
midpoint ``m`` and produces

    (x0, m, x1, ..., x_{n-1})
    (xn, m, x1, ..., x_g, x_{n-1}, ..., x_{g+1})

both of type ``(g + 1) mod n``.  In two dimensions this is plain newest
vertex bisection and the type is always 0.

New vertices are keyed by the sorted index pair of the bisected edge, so
conformity is decided by index arithmetic only.
"""
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError, InputError, NonconformingMeshError, RefinementError

__all__ = [
    "TaggedSimplex",
    "Triangulation",
    "MeshPair",
    "MeshMetrics",
    "bisect",
    "red_refine",
    "refine_conforming",
    "refine_uniform",
    "diameter_study",
    "mesh_metrics",
    "simplex_volume",
    "simplex_diameter",
    "unit_square",
    "l_shape",
    "single_simplex",
    "reference_triangle",
    "reference_tetrahedron",
    "load_mesh",
    "save_mesh",
    "PRESETS",
    "make_preset",
]


@dataclass(frozen=True)
class TaggedSimplex:
    """Ordered vertex tuple with type tag and refinement level."""

    vertices: tuple
    type_tag: int = 0
    level: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))
        n = len(self.vertices) - 1
        if n not in (2, 3):
            raise InputError(f"only triangles and tetrahedra are supported, got {n + 1} vertices")
        if len(set(self.vertices)) != n + 1:
            raise GeometryError(f"repeated vertex in {self.vertices}")
        if not 0 <= self.type_tag < max(n, 1) or (n == 2 and self.type_tag != 0):
            raise InputError(f"invalid type tag {self.type_tag} for dimension {n}")
        if self.level < 0:
            raise InputError("level must be nonnegative")

    @property
    def dim(self):
        return len(self.vertices) - 1

    @property
    def refinement_edge(self):
        return self.vertices[0], self.vertices[-1]


def simplex_volume(points):
    """Volume of the simplex spanned by the rows of ``points``."""
    P = np.asarray(points, dtype=float)
    n = P.shape[1]
    return abs(np.linalg.det(P[1:] - P[0])) / math.factorial(n)


def simplex_diameter(points):
    P = np.asarray(points, dtype=float)
    d = P[:, None, :] - P[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


def _check_nondegenerate(points):
    vol = simplex_volume(points)
    h = simplex_diameter(points)
    n = len(points) - 1
    if not vol > 1e-13 * h**n:
        raise GeometryError("degenerate simplex (zero volume)")
    return vol


def _child_tuples(verts, type_tag, m):
    n = len(verts) - 1
    inner = tuple(verts[1:n])
    first = (verts[0], m) + inner
    second = (verts[n], m) + inner[:type_tag] + inner[type_tag:][::-1]
    child_type = (type_tag + 1) % n if n == 3 else 0
    return first, second, child_type


def bisect(simplex, coords):
    """Bisect one tagged simplex.

    The midpoint of the refinement edge receives index ``len(coords)``.
    Returns ``(child1, child2, midpoint)``.
    """
    coords = np.asarray(coords, dtype=float)
    pts = coords[list(simplex.vertices)]
    _check_nondegenerate(pts)
    a, b = simplex.refinement_edge
    midpoint = 0.5 * (coords[a] + coords[b])
    first, second, t = _child_tuples(simplex.vertices, simplex.type_tag, len(coords))
    lev = simplex.level + 1
    return TaggedSimplex(first, t, lev), TaggedSimplex(second, t, lev), midpoint


def red_refine(points):
    """Red refinement of a triangle given by three points.

    Returns four triangles (each a ``3 x 2`` array).  ``T1, T2, T3`` hold the
    corners ``P1, P2, P3`` and ``T4`` is the interior triangle
    ``(Q1, Q2, Q3)`` of the edge midpoints, ``Q_j`` opposite ``P_j``.
    """
    P = np.asarray(points, dtype=float)
    if P.shape != (3, 2):
        raise InputError("red refinement is only defined for triangles in 2D")
    _check_nondegenerate(P)
    q1 = 0.5 * (P[1] + P[2])
    q2 = 0.5 * (P[0] + P[2])
    q3 = 0.5 * (P[0] + P[1])
    return [
        np.array([P[0], q3, q2]),
        np.array([P[1], q1, q3]),
        np.array([P[2], q2, q1]),
        np.array([q1, q2, q3]),
    ]


class Triangulation:
    """Conforming simplicial mesh in two or three dimensions.

    Parameters
    ----------
    coordinates : array_like, shape (N, n)
    elements : array_like of int, shape (M, n + 1)
        Ordered vertex tuples; the first and last vertex span the
        refinement edge.
    types, levels : array_like of int, optional
    dirichlet_sides : iterable of vertex tuples, optional
        Boundary sides carrying the homogeneous Dirichlet condition.  The
        default ``None`` means the whole boundary.
    midpoints : dict, optional
        Registry ``(a, b) -> m`` of bisected edges (``a < b``).
    """

    def __init__(self, coordinates, elements, types=None, levels=None,
                 dirichlet_sides=None, midpoints=None, validate=True):
        coords = np.array(coordinates, dtype=float)
        elems = np.array(elements, dtype=np.int64)
        if coords.ndim != 2 or coords.shape[1] not in (2, 3):
            raise InputError("coordinates must have shape (N, 2) or (N, 3)")
        n = coords.shape[1]
        if elems.ndim != 2 or elems.shape[1] != n + 1:
            raise InputError(f"elements must have shape (M, {n + 1})")
        if elems.size and (elems.min() < 0 or elems.max() >= len(coords)):
            raise InputError("element refers to a missing vertex")
        m = len(elems)
        self.dim = n
        self.coordinates = coords
        self.elements = elems
        self.types = np.zeros(m, dtype=np.int64) if types is None else np.array(types, dtype=np.int64)
        self.levels = np.zeros(m, dtype=np.int64) if levels is None else np.array(levels, dtype=np.int64)
        if n == 2 and np.any(self.types != 0):
            raise InputError("type tags must be 0 in two dimensions")
        if np.any((self.types < 0) | (self.types >= n)):
            raise InputError("type tag out of range")
        self.midpoints = dict(midpoints or {})
        self._dirichlet = None if dirichlet_sides is None else frozenset(
            tuple(sorted(int(i) for i in s)) for s in dirichlet_sides)
        for arr in (self.coordinates, self.elements, self.types, self.levels):
            arr.setflags(write=False)
        if validate:
            self.validate()

    # ------------------------------------------------------------------ basic
    @property
    def n_vertices(self):
        return len(self.coordinates)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_sides(self):
        return len(self.sides)

    @property
    def simplices(self):
        return [TaggedSimplex(tuple(e), int(t), int(l))
                for e, t, l in zip(self.elements, self.types, self.levels)]

    def element_points(self, ids=None):
        """Vertex coordinates per element, shape (M, n + 1, n)."""
        if ids is None:
            return self.coordinates[self.elements]
        return self.coordinates[self.elements[ids]]

    @cached_property
    def volumes(self):
        P = self.element_points()
        D = P[:, 1:, :] - P[:, :1, :]
        out = np.abs(np.linalg.det(D)) / math.factorial(self.dim)
        out.setflags(write=False)
        return out

    @cached_property
    def diameters(self):
        P = self.element_points()
        d = P[:, :, None, :] - P[:, None, :, :]
        out = np.sqrt(np.max(np.sum(d * d, axis=-1), axis=(1, 2)))
        out.setflags(write=False)
        return out

    @cached_property
    def barycentric_gradients(self):
        """Gradients of the barycentric coordinates, shape (M, n + 1, n)."""
        P = self.element_points()
        D = P[:, 1:, :] - P[:, :1, :]
        Dinv = np.linalg.inv(D)  # rows of D^-T are gradients of lambda_1..n
        G = np.empty((self.n_elements, self.dim + 1, self.dim))
        G[:, 1:, :] = np.transpose(Dinv, (0, 2, 1))
        G[:, 0, :] = -G[:, 1:, :].sum(axis=1)
        G.setflags(write=False)
        return G

    # ------------------------------------------------------------------ sides
    @cached_property
    def _side_data(self):
        k = self.dim + 1
        local = np.array([[i for i in range(k) if i != j] for j in range(k)])
        all_sides = np.sort(self.elements[:, local], axis=2).reshape(-1, self.dim)
        sides, inverse, counts = np.unique(all_sides, axis=0, return_inverse=True,
                                           return_counts=True)
        inverse = inverse.reshape(self.n_elements, k)
        if counts.size and counts.max() > 2:
            raise NonconformingMeshError("a side is shared by more than two simplices")
        side_elements = -np.ones((len(sides), 2), dtype=np.int64)
        side_local = -np.ones((len(sides), 2), dtype=np.int64)
        flat_e = np.repeat(np.arange(self.n_elements), k)
        flat_j = np.tile(np.arange(k), self.n_elements)
        flat_s = inverse.ravel()
        order = np.argsort(flat_s, kind="stable")
        flat_s, flat_e, flat_j = flat_s[order], flat_e[order], flat_j[order]
        first = np.ones(len(flat_s), dtype=bool)
        first[1:] = flat_s[1:] != flat_s[:-1]
        side_elements[flat_s[first], 0] = flat_e[first]
        side_local[flat_s[first], 0] = flat_j[first]
        side_elements[flat_s[~first], 1] = flat_e[~first]
        side_local[flat_s[~first], 1] = flat_j[~first]
        for arr in (sides, inverse, side_elements, side_local):
            arr.setflags(write=False)
        return sides, inverse, side_elements, side_local

    @property
    def sides(self):
        """Sorted vertex tuples of all sides, shape (S, n)."""
        return self._side_data[0]

    @property
    def element_sides(self):
        """Side index of local side ``j`` (opposite local vertex ``j``)."""
        return self._side_data[1]

    @property
    def side_elements(self):
        """Adjacent element ids per side; ``-1`` marks a boundary side."""
        return self._side_data[2]

    @property
    def side_local(self):
        """Local index of each side within its adjacent elements."""
        return self._side_data[3]

    @cached_property
    def boundary_sides(self):
        out = self.side_elements[:, 1] < 0
        out.setflags(write=False)
        return out

    @cached_property
    def dirichlet_mask(self):
        """Boolean mask over sides carrying the Dirichlet condition."""
        if self._dirichlet is None:
            return self.boundary_sides
        keys = [tuple(int(i) for i in s) for s in self.sides]
        out = np.array([k in self._dirichlet for k in keys], dtype=bool)
        if np.any(out & ~self.boundary_sides):
            raise InputError("a Dirichlet side is not a boundary side")
        out.setflags(write=False)
        return out

    @property
    def dirichlet_sides(self):
        return None if self._dirichlet is None else sorted(self._dirichlet)

    @cached_property
    def boundary_vertices(self):
        out = np.zeros(self.n_vertices, dtype=bool)
        out[np.unique(self.sides[self.boundary_sides])] = True
        out.setflags(write=False)
        return out

    @cached_property
    def dirichlet_vertices(self):
        out = np.zeros(self.n_vertices, dtype=bool)
        out[np.unique(self.sides[self.dirichlet_mask])] = True
        out.setflags(write=False)
        return out

    @cached_property
    def used_vertices(self):
        out = np.zeros(self.n_vertices, dtype=bool)
        out[np.unique(self.elements)] = True
        return out

    @cached_property
    def side_measures(self):
        P = self.coordinates[self.sides]
        if self.dim == 2:
            return np.linalg.norm(P[:, 1] - P[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=1)

    @cached_property
    def side_midpoints(self):
        return self.coordinates[self.sides].mean(axis=1)

    # ---------------------------------------------------------------- patches
    @cached_property
    def vertex_patches(self):
        """List of element-id arrays ``T(z)`` for every vertex ``z``."""
        flat = self.elements.ravel()
        owner = np.repeat(np.arange(self.n_elements), self.dim + 1)
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_vertices)
        starts = np.concatenate([[0], np.cumsum(counts)])
        owner = owner[order]
        return [owner[starts[z]:starts[z + 1]] for z in range(self.n_vertices)]

    @cached_property
    def patch_sizes(self):
        return np.bincount(self.elements.ravel(), minlength=self.n_vertices)

    @cached_property
    def angles(self):
        """Interior angle at each local vertex, shape (M, 3); 2D only."""
        if self.dim != 2:
            raise InputError("angles are only available in 2D")
        P = self.element_points()
        out = np.empty((self.n_elements, 3))
        for j in range(3):
            u = P[:, (j + 1) % 3] - P[:, j]
            v = P[:, (j + 2) % 3] - P[:, j]
            cos = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            out[:, j] = np.arccos(np.clip(cos, -1.0, 1.0))
        out.setflags(write=False)
        return out

    # ------------------------------------------------------------- validation
    def hanging_edges(self):
        """Element edges whose midpoint is a registered vertex."""
        if not self.midpoints:
            return []
        k = self.dim + 1
        out = []
        for e in self.elements:
            for i in range(k):
                for j in range(i + 1, k):
                    key = (min(e[i], e[j]), max(e[i], e[j]))
                    if key in self.midpoints:
                        out.append(key)
        return out

    def _geometric_hanging_nodes(self):
        bd = self.sides[self.boundary_sides]
        if len(bd) == 0:
            return []
        tree = cKDTree(self.coordinates)
        P = self.coordinates[bd]
        centre = P.mean(axis=1)
        radius = np.max(np.linalg.norm(P - centre[:, None, :], axis=2), axis=1)
        found = []
        for s, c, r, verts in zip(range(len(bd)), centre, radius, bd):
            for z in tree.query_ball_point(c, r * (1 + 1e-9)):
                if z in verts:
                    continue
                lam = _side_barycentric(self.coordinates[verts], self.coordinates[z])
                if lam is not None and np.all(lam > 1e-10):
                    found.append((tuple(int(v) for v in verts), z))
        return found

    def validate(self):
        """Check positive volumes and conformity; raise on violation."""
        if self.n_elements == 0:
            raise InputError("empty mesh")
        tol = 1e-13 * self.diameters ** self.dim
        if np.any(self.volumes <= tol):
            raise GeometryError("mesh contains a degenerate simplex")
        _ = self._side_data
        if self.midpoints:
            hanging = self.hanging_edges()
            if hanging:
                raise NonconformingMeshError(f"hanging node on edge {hanging[0]}")
        else:
            hanging = self._geometric_hanging_nodes()
            if hanging:
                raise NonconformingMeshError(f"vertex {hanging[0][1]} hangs on side {hanging[0][0]}")
        _ = self.dirichlet_mask
        return self

    def is_conforming(self):
        try:
            self.validate()
        except NonconformingMeshError:
            return False
        return True

    def euler_characteristic(self):
        """``V - E + F`` in 2D (1 for a simply connected domain)."""
        if self.dim != 2:
            raise InputError("Euler characteristic only implemented in 2D")
        return int(np.sum(self.used_vertices)) - self.n_sides + self.n_elements

    def is_connected(self):
        import scipy.sparse as sp
        from scipy.sparse.csgraph import connected_components
        inner = self.side_elements[~self.boundary_sides]
        g = sp.coo_matrix((np.ones(len(inner)), (inner[:, 0], inner[:, 1])),
                          shape=(self.n_elements, self.n_elements))
        return connected_components(g, directed=False)[0] == 1

    def vertex_supports(self, n_base):
        """Generating base vertices of every vertex.

        Vertices ``< n_base`` are their own support; a registered midpoint
        inherits the union of its parents' supports.  A point lies in the
        convex hull of its support.
        """
        parents = {m: key for key, m in self.midpoints.items()}
        out = [None] * self.n_vertices
        for v in range(self.n_vertices):
            stack = [v]
            while stack:
                w = stack[-1]
                if out[w] is not None:
                    stack.pop()
                    continue
                if w < n_base or w not in parents:
                    out[w] = frozenset([w])
                    stack.pop()
                    continue
                a, b = parents[w]
                if out[a] is None:
                    stack.append(a)
                elif out[b] is None:
                    stack.append(b)
                else:
                    out[w] = out[a] | out[b]
                    stack.pop()
        return out

    def coarse_side_map(self, coarse):
        """For each side of this (fine) mesh the containing side of ``coarse``.

        Returns an int array with ``-1`` for sides interior to a coarse
        element.  Raises if this mesh does not refine ``coarse``.
        """
        nb = coarse.n_vertices
        if self.n_vertices < nb or not np.array_equal(self.coordinates[:nb], coarse.coordinates):
            raise InputError("mesh is not a refinement of the given coarse mesh")
        sup = self.vertex_supports(nb)
        lookup = {tuple(int(i) for i in s): j for j, s in enumerate(coarse.sides)}
        out = -np.ones(self.n_sides, dtype=np.int64)
        for j, s in enumerate(self.sides):
            u = frozenset().union(*(sup[int(v)] for v in s))
            if len(u) == self.dim:
                out[j] = lookup.get(tuple(sorted(u)), -1)
        measure = np.bincount(out[out >= 0], weights=self.side_measures[out >= 0],
                              minlength=coarse.n_sides)
        if np.any(np.abs(measure - coarse.side_measures) > 1e-10 * coarse.side_measures):
            raise InputError("mesh is not a refinement of the given coarse mesh")
        return out

    def __repr__(self):
        return (f"Triangulation(dim={self.dim}, n_vertices={self.n_vertices}, "
                f"n_elements={self.n_elements})")

    # ------------------------------------------------------------------- JSON
    def to_dict(self):
        return {
            "dim": self.dim,
            "vertices": self.coordinates.tolist(),
            "simplices": [{"v": [int(i) for i in e], "type": int(t), "level": int(l)}
                          for e, t, l in zip(self.elements, self.types, self.levels)],
            "dirichlet_sides": [list(s) for s in (self.sides[self.dirichlet_mask].tolist())],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            dim = int(data["dim"])
            vertices = data["vertices"]
            simplices = data["simplices"]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed mesh document: {exc}") from exc
        elems = [s["v"] for s in simplices]
        types = [s.get("type", 0) for s in simplices]
        levels = [s.get("level", 0) for s in simplices]
        mesh = cls(vertices, elems, types, levels,
                   dirichlet_sides=data.get("dirichlet_sides"))
        if mesh.dim != dim:
            raise InputError("declared dim does not match vertex coordinates")
        return mesh


def _side_barycentric(side_pts, x):
    """Barycentric coordinates of ``x`` in a side, or None if off the side."""
    A = (side_pts[1:] - side_pts[0]).T
    lam, *_ = np.linalg.lstsq(A, x - side_pts[0], rcond=None)
    if np.linalg.norm(A @ lam - (x - side_pts[0])) > 1e-10 * np.linalg.norm(A):
        return None
    return np.concatenate([[1 - lam.sum()], lam])


def load_mesh(path):
    with open(path) as fh:
        return Triangulation.from_dict(json.load(fh))


def save_mesh(mesh, path):
    with open(path, "w") as fh:
        json.dump(mesh.to_dict(), fh)


# ---------------------------------------------------------------- refinement
@dataclass
class MeshPair:
    """A coarse mesh, its refinement and the bookkeeping between them.

    ``ancestor[k]`` is the coarse element containing fine element ``k``;
    ``overlap`` maps each unrefined coarse element to its fine copy.
    """

    coarse: Triangulation
    fine: Triangulation
    ancestor: np.ndarray
    overlap: dict = field(default_factory=dict)

    @cached_property
    def descendants(self):
        out = {k: [] for k in range(self.coarse.n_elements)}
        for f, c in enumerate(self.ancestor):
            out[int(c)].append(f)
        return out

    @cached_property
    def refined(self):
        """Coarse element ids not in the overlap (``T \\ T_hat``)."""
        return np.array(sorted(set(range(self.coarse.n_elements)) - set(self.overlap)), dtype=np.int64)

    @cached_property
    def overlap_mask_coarse(self):
        out = np.zeros(self.coarse.n_elements, dtype=bool)
        out[list(self.overlap)] = True
        return out

    @cached_property
    def overlap_mask_fine(self):
        out = np.zeros(self.fine.n_elements, dtype=bool)
        out[list(self.overlap.values())] = True
        return out

    def check(self, rtol=1e-12):
        vol = np.bincount(self.ancestor, weights=self.fine.volumes,
                          minlength=self.coarse.n_elements)
        if np.any(np.abs(vol - self.coarse.volumes) > rtol * self.coarse.volumes):
            raise GeometryError("descendants do not tile their ancestor")
        for c, f in self.overlap.items():
            if not np.array_equal(self.coarse.elements[c], self.fine.elements[f]):
                raise GeometryError("overlap element differs between meshes")
        return self

    @classmethod
    def identity(cls, mesh):
        ids = np.arange(mesh.n_elements)
        return cls(mesh, mesh, ids, {int(i): int(i) for i in ids})

    @classmethod
    def from_refinement(cls, coarse, marked):
        fine, ancestor = _refine(coarse, marked)
        overlap = _overlap(coarse, fine, ancestor)
        return cls(coarse, fine, ancestor, overlap)

    def compose(self, other):
        """Pair ``(self.coarse, other.fine)`` for ``other.coarse is self.fine``."""
        if other.coarse is not self.fine:
            raise InputError("pairs do not chain")
        ancestor = self.ancestor[other.ancestor]
        overlap = _overlap(self.coarse, other.fine, ancestor)
        return MeshPair(self.coarse, other.fine, ancestor, overlap)


def _overlap(coarse, fine, ancestor):
    counts = np.bincount(ancestor, minlength=coarse.n_elements)
    overlap = {}
    for f, c in enumerate(ancestor):
        if counts[c] == 1:
            overlap[int(c)] = int(f)
    return overlap


def _refine(mesh, marked):
    """Bisect ``marked`` and close to a conforming mesh.

    Returns the fine mesh and the ancestor map (fine element -> coarse id).
    """
    marked = sorted({int(k) for k in marked})
    if marked and (marked[0] < 0 or marked[-1] >= mesh.n_elements):
        raise InputError("marked element id out of range")
    if not marked:
        return mesh, np.arange(mesh.n_elements)
    n = mesh.dim
    k = n + 1
    coords = [row for row in mesh.coordinates]
    midpoints = dict(mesh.midpoints)
    support = {}
    elems = {i: (tuple(int(v) for v in e), int(t), int(l), i)
             for i, (e, t, l) in enumerate(zip(mesh.elements, mesh.types, mesh.levels))}
    next_id = mesh.n_elements
    edge_map = {}

    def edges(verts):
        for i in range(k):
            for j in range(i + 1, k):
                a, b = verts[i], verts[j]
                yield (a, b) if a < b else (b, a)

    for eid, rec in elems.items():
        for key in edges(rec[0]):
            edge_map.setdefault(key, set()).add(eid)

    queue = deque(marked)
    must = set(marked)
    bisections = 0
    cap = 64 * mesh.n_elements

    while queue:
        eid = queue.popleft()
        rec = elems.get(eid)
        if rec is None:
            continue
        verts, t, lev, anc = rec
        if eid not in must and not any(key in midpoints for key in edges(verts)):
            continue
        must.discard(eid)
        bisections += 1
        if bisections > cap:
            raise RefinementError("closure did not terminate; the initial tagging is not admissible")
        a, b = verts[0], verts[-1]
        key = (a, b) if a < b else (b, a)
        m = midpoints.get(key)
        if m is None:
            m = len(coords)
            coords.append(0.5 * (coords[a] + coords[b]))
            midpoints[key] = m
            support[m] = support.get(a, frozenset([a])) | support.get(b, frozenset([b]))
            for other in edge_map.get(key, ()):
                if other != eid:
                    queue.append(other)
        for e in edges(verts):
            edge_map[e].discard(eid)
        del elems[eid]
        first, second, ct = _child_tuples(verts, t, m)
        for child in (first, second):
            cid = next_id
            next_id += 1
            elems[cid] = (child, ct, lev + 1, anc)
            hanging = False
            for e in edges(child):
                edge_map.setdefault(e, set()).add(cid)
                if e in midpoints:
                    hanging = True
            if hanging:
                queue.append(cid)

    ids = sorted(elems)
    recs = [elems[i] for i in ids]
    dirichlet = None
    if mesh._dirichlet is not None:
        dirichlet = [frozenset(s) for s in mesh._dirichlet]
    fine = Triangulation(
        np.array(coords),
        np.array([r[0] for r in recs], dtype=np.int64),
        np.array([r[1] for r in recs], dtype=np.int64),
        np.array([r[2] for r in recs], dtype=np.int64),
        dirichlet_sides=None,
        midpoints=midpoints,
        validate=False,
    )
    if dirichlet is not None:
        bd = fine.sides[fine.boundary_sides]
        keep = []
        for s in bd:
            sup = frozenset().union(*(support.get(int(v), frozenset([int(v)])) for v in s))
            if any(sup <= d for d in dirichlet):
                keep.append(tuple(int(v) for v in s))
        fine = Triangulation(fine.coordinates, fine.elements, fine.types, fine.levels,
                             dirichlet_sides=keep, midpoints=midpoints, validate=False)
    return fine, np.array([r[3] for r in recs], dtype=np.int64)


def refine_conforming(mesh, marked):
    """Bisect every marked simplex and close the result to a conforming mesh."""
    return _refine(mesh, marked)[0]


def refine_uniform(mesh, rounds=1):
    """Bisect every element ``rounds`` times (with closure)."""
    for _ in range(rounds):
        mesh = refine_conforming(mesh, range(mesh.n_elements))
    return mesh


def diameter_study(points, type_tag=0, rounds=3):
    """Max element diameter over ``h_K`` after 1..rounds uniform bisections.

    ``points`` is the ordered vertex tuple of the initial simplex.
    """
    if rounds < 1:
        raise InputError("rounds must be >= 1")
    P = np.asarray(points, dtype=float)
    _check_nondegenerate(P)
    coords = [p for p in P]
    midpoints = {}
    n = P.shape[1]
    level = [(tuple(range(n + 1)), int(type_tag) if n == 3 else 0)]
    h_K = simplex_diameter(P)
    ratios = []
    for _ in range(rounds):
        nxt = []
        for verts, t in level:
            a, b = verts[0], verts[-1]
            key = (min(a, b), max(a, b))
            m = midpoints.get(key)
            if m is None:
                m = len(coords)
                coords.append(0.5 * (coords[a] + coords[b]))
                midpoints[key] = m
            first, second, ct = _child_tuples(verts, t, m)
            nxt += [(first, ct), (second, ct)]
        level = nxt
        C = np.array(coords)
        ratios.append(max(simplex_diameter(C[list(v)]) for v, _ in level) / h_K)
    return np.array(ratios)


# ------------------------------------------------------------------- metrics
@dataclass(frozen=True)
class MeshMetrics:
    omega0: float
    h_max: float
    m_int: int
    m_bd: int
    c_quot: float

    @property
    def m_patch(self):
        return max(self.m_int, self.m_bd)


def mesh_metrics(mesh):
    """Minimal angle, max diameter, patch cardinalities and area ratio."""
    if mesh.dim != 2:
        raise InputError("mesh metrics are defined for 2D meshes")
    sizes = mesh.patch_sizes
    used = mesh.used_vertices
    interior = used & ~mesh.boundary_vertices
    bd = used & mesh.boundary_vertices
    m_int = int(sizes[interior].max()) if np.any(interior) else 0
    m_bd = int(sizes[bd].max()) if np.any(bd) else 0
    pairs = mesh.side_elements[~mesh.boundary_sides]
    if len(pairs):
        v = mesh.volumes
        r = v[pairs[:, 0]] / v[pairs[:, 1]]
        c_quot = float(max(r.max(), (1.0 / r).max()))
    else:
        c_quot = 1.0
    return MeshMetrics(float(mesh.angles.min()), float(mesh.diameters.max()), m_int, m_bd, c_quot)


# ------------------------------------------------------------------- presets
def _criss_cross(cells):
    """Criss-cross triangulation of a union of unit-size square cells.

    ``cells`` lists lower-left corners (integer grid units).  Every square
    is split by both diagonals; each triangle is ordered (corner, centre,
    corner) so that the square side is its refinement edge.
    """
    index = {}
    coords = []

    def vid(p):
        if p not in index:
            index[p] = len(coords)
            coords.append(p)
        return index[p]

    elems = []
    for (i, j) in cells:
        a = vid((2 * i, 2 * j))
        b = vid((2 * i + 2, 2 * j))
        c = vid((2 * i + 2, 2 * j + 2))
        d = vid((2 * i, 2 * j + 2))
        e = vid((2 * i + 1, 2 * j + 1))
        elems += [(a, e, b), (b, e, c), (c, e, d), (d, e, a)]
    return np.array(coords, dtype=float) / 2.0, np.array(elems)


def unit_square(n=1):
    """Criss-cross mesh of the unit square with ``n x n`` cells."""
    cells = [(i, j) for j in range(n) for i in range(n)]
    coords, elems = _criss_cross(cells)
    return Triangulation(coords / n, elems)


def l_shape(n=1):
    """Criss-cross mesh of ``(-1, 1)^2`` minus the closed fourth quadrant."""
    cells = [(i, j) for j in range(2 * n) for i in range(2 * n)
             if not (i >= n and j < n)]
    coords, elems = _criss_cross(cells)
    return Triangulation(coords / n - 1.0, elems)


def single_simplex(points, type_tag=0):
    P = np.asarray(points, dtype=float)
    _check_nondegenerate(P)
    return Triangulation(P, [list(range(len(P)))], [type_tag])


def reference_triangle():
    """Unit right triangle with the hypotenuse as refinement edge."""
    return np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])


def reference_tetrahedron():
    """``conv{0, e1, e2, e3}`` in natural vertex order."""
    return np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


PRESETS = {
    "unit-square": lambda: unit_square(2),
    "right-isosceles-square": lambda: unit_square(2),
    "l-shape": lambda: l_shape(1),
    "reference-triangle": lambda: single_simplex(reference_triangle()),
    "reference-tetrahedron": lambda: single_simplex(reference_tetrahedron()),
}


def make_preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
