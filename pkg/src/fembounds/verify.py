"""Numerical certification of the discrete inequalities.

Each certificate computes an exact discrete extremal ratio
``sup x.N x / x.D x`` as the largest generalized eigenvalue of a pair of
assembled quadratic forms and compares it with the closed-form constant.
Kernels of ``D`` (constants, consistency constraints) are removed by
restricting to an orthonormal basis of the admissible subspace, and the
maximiser is substituted back into both forms as an independent check.
"""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import null_space
from scipy.spatial.distance import pdist

from . import constants as K
from .errors import DefinitenessError, InputError, NumericalFailure
from .fem import (FeFunction, FeSpace, assemble_stiffness, block_mass, local_mass,
                  prolongation_matrix, trace_identity_check)
from .mesh import (MeshPair, Triangulation, refine_conforming, refine_uniform,
                   simplex_diameter, single_simplex, unit_square)
from .numerics import gen_sym_eigen, sym_eigen
from .operators import (EnrichmentKind, dqi_matrix, enrichment_matrix, inc_matrix,
                        jqi_constraints, quasi_interpolation_matrix)
from .validation import check_mesh, check_rng

__all__ = [
    "CERT_TOL",
    "ExtremalResult",
    "extremal_ratio",
    "extremal_poincare",
    "extremal_operator_bound",
    "extremal_inverse",
    "extremal_friedrichs",
    "extremal_inc",
    "extremal_quasi_interpolation",
    "DistTree",
    "dist_tree",
    "verify_dist_recursions",
    "cycle_matrices",
    "lemma42_spectra",
    "HelmholtzResult",
    "verify_helmholtz",
    "run_suite",
    "report_json",
]

CERT_TOL = 1e-10


@dataclass
class ExtremalResult:
    """Certified ratio against its bound.

    ``computed`` and ``bound`` are compared directly (both are square roots
    of Rayleigh quotients unless the name says otherwise).
    """

    name: str
    computed: float
    bound: float
    extremizer: np.ndarray = field(default=None, repr=False)
    mesh_id: str = ""
    anchor: str = ""
    tol: float = CERT_TOL
    details: dict = field(default_factory=dict)

    @property
    def margin(self):
        return self.bound - self.computed

    @property
    def passed(self):
        return self.margin >= -self.tol

    @property
    def status(self):
        return "pass" if self.passed else "fail"

    def to_dict(self):
        out = {"name": self.name, "computed": float(self.computed), "bound": float(self.bound),
               "margin": float(self.margin), "status": self.status, "mesh_id": self.mesh_id}
        if self.anchor:
            out["anchor"] = self.anchor
        return out


def _mesh_id(mesh):
    return f"{mesh.dim}d-{mesh.n_elements}el-{mesh.n_vertices}v"


def extremal_ratio(N, D, basis=None, method="auto"):
    """Largest ``x.N x / x.D x`` over ``range(basis)`` and its maximiser.

    The maximiser is re-substituted into the original forms; a mismatch
    above ``1e-9`` relative raises :class:`NumericalFailure`.
    """
    N = N.toarray() if sp.issparse(N) else np.asarray(N, dtype=float)
    D = D.toarray() if sp.issparse(D) else np.asarray(D, dtype=float)
    if basis is not None:
        N = basis.T @ N @ basis
        D = basis.T @ D @ basis
    if N.shape[0] == 0:
        return 0.0, np.zeros(0 if basis is None else basis.shape[0])
    w, Y = gen_sym_eigen(N, D, method=method, eigenvectors=True)
    lam = float(w[-1])
    y = Y[:, -1]
    x = y if basis is None else basis @ y
    num = float(y @ N @ y)
    den = float(y @ D @ y)
    if abs(num / den - lam) > 1e-9 * max(abs(lam), 1e-300) + 1e-300:
        raise NumericalFailure("extremizer does not reproduce the extremal eigenvalue")
    return max(lam, 0.0), x


# ---------------------------------------------------------------- Poincare
def _diameter(mesh):
    return float(np.max(pdist(mesh.coordinates[mesh.used_vertices])))


def extremal_poincare(mesh, h_K=None):
    """``sup ||v - mean v||^2 / (h_K^2 ||grad_NC v||^2)`` over CR on ``mesh``.

    ``mesh`` triangulates one simplex ``K`` by bisections.  Returns the
    supremum itself (not its root) against ``C(n)^2``.
    """
    check_mesh(mesh)
    if not mesh.is_connected():
        raise InputError("disconnected triangulation: the stiffness kernel exceeds the constants")
    h = _diameter(mesh) if h_K is None else float(h_K)
    V = FeSpace(mesh, "CR_free")
    B = V.broken
    mass = (B.T @ block_mass(mesh) @ B)
    stiff = assemble_stiffness(V) * h ** 2
    mean_row = (np.repeat(mesh.volumes / (mesh.dim + 1), mesh.dim + 1) @ B).reshape(1, -1)
    Z = null_space(mean_row)
    try:
        lam, x = extremal_ratio(mass, stiff, Z)
    except DefinitenessError as exc:
        raise InputError("stiffness is singular beyond constants") from exc
    bound = K.poincare_constant(mesh.dim) ** 2
    return ExtremalResult("poincare", lam, bound, x, _mesh_id(mesh), "discrete Poincare inequality")


# --------------------------------------------------------------- enrichment
def _h_weights(mesh):
    return mesh.diameters ** -2.0


def extremal_operator_bound(mesh, kind="J1", overlap=None, consts=None):
    """``sup ||h^-1 (v - J_C v)|| / ||grad_NC v||`` over ``CR_zero``.

    The bound is ``c_apx`` (``c_apx(J1)`` for ``J1``).  ``quasi_JQI`` is
    restricted to functions satisfying its consistency hypothesis.
    """
    check_mesh(mesh, dim=2)
    kind = EnrichmentKind.coerce(kind, overlap)
    if not kind.linear:
        raise InputError(f"{kind.variant} is nonlinear; only the convex-hull property is checked")
    consts = consts or K.evaluate_constants(K.ConstantsInput.from_mesh(mesh))
    bound = consts["c_apx_J1"] if kind.variant == "J1" else consts["c_apx"]
    V = FeSpace(mesh, "CR_zero")
    if V.n_dofs == 0:
        return ExtremalResult(f"enrich[{kind.variant}]", 0.0, bound, np.zeros(0), _mesh_id(mesh),
                              "enrichment approximation")
    B = V.broken
    E, S = enrichment_matrix(mesh, kind)
    Dm = B - S.broken @ E @ B
    N = Dm.T @ block_mass(mesh, _h_weights(mesh)) @ Dm
    D = assemble_stiffness(V)
    basis = None
    if kind.variant == "quasi_JQI":
        C = (jqi_constraints(mesh, kind.overlap) @ B).toarray()
        if C.shape[0]:
            basis = null_space(C)
    lam, x = extremal_ratio(N, D, basis)
    return ExtremalResult(f"enrich[{kind.variant}]", math.sqrt(lam), bound, x, _mesh_id(mesh),
                          "enrichment approximation",
                          details={"c_apx": consts["c_apx"], "c_apx_J1": consts["c_apx_J1"]})


# ------------------------------------------------------------------ inverse
def extremal_inverse(points):
    """Largest eigenvalue of (stiffness, mass) on P1 of one triangle.

    Returns ``h_T * lambda_max^(1/2)`` against ``c_inv`` of the triangle's
    minimal angle; ``details`` holds ``lambda_max`` and the closed form
    ``6 (sigma + (sigma^2 - 3)^(1/2)) / |T|`` with ``sigma = sum cot``.
    """
    mesh = single_simplex(points)
    if mesh.dim != 2:
        raise InputError("the inverse estimate is checked on triangles")
    vol = float(mesh.volumes[0])
    G = mesh.barycentric_gradients[0]
    lam = float(gen_sym_eigen(vol * G @ G.T, vol * local_mass(2))[-1])
    ang = mesh.angles[0]
    # sigma = sum cot = (a^2 + b^2 + c^2) / (4|T|) and
    # sigma^2 - 3 = sum (a^2 - b^2)^2 / (8 |T|^2), free of cancellation
    P = mesh.coordinates
    e2 = np.array([np.sum((P[(i + 1) % 3] - P[(i + 2) % 3]) ** 2) for i in range(3)])
    sigma = float(e2.sum() / (4 * vol))
    disc = float(np.sum((e2 - np.roll(e2, 1)) ** 2) / (8 * vol * vol))
    closed = 6 * (sigma + math.sqrt(disc)) / vol
    h = float(mesh.diameters[0])
    omega0 = float(ang.min())
    return ExtremalResult("inverse", h * math.sqrt(lam), K.c_inv(omega0), None, _mesh_id(mesh),
                          "inverse estimate",
                          details={"lambda_max": lam, "closed_form": closed, "sigma": sigma,
                                   "h2_lambda": h * h * lam})


# --------------------------------------------------------------- Friedrichs
def extremal_friedrichs(mesh, consts=None):
    """``sup ||v|| / ||grad_NC v||`` over ``CR_zero`` against ``c_dF``."""
    check_mesh(mesh, dim=2)
    consts = consts or K.evaluate_constants(K.ConstantsInput.from_mesh(mesh))
    V = FeSpace(mesh, "CR_zero")
    bound = consts["c_dF"]
    if V.n_dofs == 0:
        return ExtremalResult("friedrichs", 0.0, bound, np.zeros(0), _mesh_id(mesh),
                              "discrete Friedrichs inequality")
    B = V.broken
    lam, x = extremal_ratio(B.T @ block_mass(mesh) @ B, assemble_stiffness(V))
    return ExtremalResult("friedrichs", math.sqrt(lam), bound, x, _mesh_id(mesh),
                          "discrete Friedrichs inequality")


# -------------------------------------------------------- interpolation
def _coarse_h_on_fine(pair):
    return pair.coarse.diameters[pair.ancestor]


def extremal_inc(pair):
    """``sup ||h_T^-1 (v - I_NC v)|| / ||grad_NC v||`` over fine ``CR_zero``.

    Bound ``kappa_CR = 2^(-1/2)``.
    """
    coarse, fine = pair.coarse, pair.fine
    Vf = FeSpace(fine, "CR_zero")
    Bf = Vf.broken
    Vc = FeSpace(coarse, "CR_free")
    Pr = prolongation_matrix(coarse, fine, pair.ancestor)
    Dm = Bf - Pr @ Vc.broken @ inc_matrix(coarse, fine) @ Bf
    N = Dm.T @ block_mass(fine, _coarse_h_on_fine(pair) ** -2.0) @ Dm
    lam, x = extremal_ratio(N, assemble_stiffness(Vf))
    return ExtremalResult("inc_interpolation", math.sqrt(lam), math.sqrt(0.5), x,
                          _mesh_id(fine), "nonconforming interpolation estimate")


def inc_elementwise_ratios(pair, v):
    """Per coarse element ``h_K^-1 ||e|| / ||grad_NC e||`` with ``e = v - I_NC v``.

    Elements with vanishing ``grad_NC e`` report 0.
    """
    coarse, fine = pair.coarse, pair.fine
    Pr = prolongation_matrix(coarse, fine, pair.ancestor)
    vals = v.broken_values.ravel()
    e = vals - Pr @ FeSpace(coarse, "CR_free").broken @ inc_matrix(coarse, fine) @ vals
    e = e.reshape(-1, fine.dim + 1)
    n = fine.dim
    l2 = fine.volumes * (np.sum(e * e, axis=1) + np.sum(e, axis=1) ** 2) / ((n + 1) * (n + 2))
    g = np.einsum("kj,kjd->kd", e, fine.barycentric_gradients)
    en = fine.volumes * np.sum(g * g, axis=1)
    L2 = np.bincount(pair.ancestor, weights=l2, minlength=coarse.n_elements)
    EN = np.bincount(pair.ancestor, weights=en, minlength=coarse.n_elements)
    out = np.zeros(coarse.n_elements)
    ok = EN > 1e-28 * max(EN.max(), 1e-300)
    out[ok] = np.sqrt(L2[ok]) / (coarse.diameters[ok] * np.sqrt(EN[ok]))
    return out


def extremal_quasi_interpolation(pair, discrete=False, consts=None):
    """First-order ratio of ``J = J1 o I_NC`` (or ``J_dQI``) over fine ``S1_zero``.

    ``sup ||h_T^-1 (v - J v)|| / ||grad v||`` against
    ``(kappa^2 + c_apx^2)^(1/2)`` with ``c_apx`` of the coarse mesh.
    """
    coarse, fine = pair.coarse, pair.fine
    check_mesh(coarse, dim=2)
    consts = consts or K.evaluate_constants(K.ConstantsInput.from_mesh(coarse))
    bound = math.sqrt(consts["kappa"] ** 2 + consts["c_apx"] ** 2)
    Vf = FeSpace(fine, "S1_zero")
    Bf = Vf.broken
    if discrete:
        Q, S = dqi_matrix(pair)
    else:
        Q, S = quasi_interpolation_matrix(coarse, fine, "J1")
    Pr = prolongation_matrix(coarse, fine, pair.ancestor)
    Dm = Bf - Pr @ S.broken @ Q @ Bf
    N = Dm.T @ block_mass(fine, _coarse_h_on_fine(pair) ** -2.0) @ Dm
    lam, x = extremal_ratio(N, assemble_stiffness(Vf))
    name = "dqi_first_order" if discrete else "qi_first_order"
    return ExtremalResult(name, math.sqrt(lam), bound, x, _mesh_id(fine),
                          "quasi-interpolation first-order estimate")


# ------------------------------------------------------- distance recursions
@dataclass
class DistTree:
    """Uniform refinement tree of one simplex.

    ``node_of[l][k]`` is the level-``l`` node containing fine element ``k``;
    ``parent[l][i]`` is the level-``(l-1)`` parent of level-``l`` node ``i``.
    ``diam[l]`` holds node diameters.
    """

    mesh: Triangulation
    mode: str
    node_of: list
    parent: list
    diam: list


def dist_tree(points, depth=3, mode="bisect", type_tag=0):
    """Build a bisection (any dimension) or red (2D) tree of ``depth`` levels."""
    P = np.asarray(points, dtype=float)
    if depth < 1:
        raise InputError("depth must be >= 1")
    if mode == "bisect":
        mesh = single_simplex(P, type_tag)
        diam = [mesh.diameters.copy()]
        parents = [np.zeros(0, dtype=np.int64)]
        for lev in range(depth):
            pair = MeshPair.from_refinement(mesh, range(mesh.n_elements))
            if pair.fine.n_elements != 2 * mesh.n_elements:
                raise InputError("uniform bisection of this simplex needs closure; not a tree")
            mesh = pair.fine
            parents.append(pair.ancestor.copy())
            diam.append(mesh.diameters.copy())
    elif mode == "red":
        if P.shape != (3, 2):
            raise InputError("red refinement is only defined for triangles")
        mesh, parents, diam = _red_tree(P, depth)
    else:
        raise InputError("mode must be 'bisect' or 'red'")
    node_of = [None] * (depth + 1)
    node_of[depth] = np.arange(mesh.n_elements)
    for lev in range(depth, 0, -1):
        node_of[lev - 1] = parents[lev][node_of[lev]]
    return DistTree(mesh, mode, node_of, parents, diam)


def _red_tree(P, depth):
    coords = [p for p in P]
    elems = [(0, 1, 2)]
    registry = {}
    parents = [np.zeros(0, dtype=np.int64)]
    diam = [np.array([simplex_diameter(P)])]

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in registry:
            registry[key] = len(coords)
            coords.append(0.5 * (coords[a] + coords[b]))
        return registry[key]

    for _ in range(depth):
        new, par = [], []
        for i, (a, b, c) in enumerate(elems):
            qa, qb, qc = mid(b, c), mid(c, a), mid(a, b)
            # same labelling as red_refine: corners then the interior triangle
            new += [(a, qc, qb), (b, qa, qc), (c, qb, qa), (qa, qb, qc)]
            par += [i] * 4
        elems = new
        parents.append(np.array(par, dtype=np.int64))
        C = np.array(coords)
        diam.append(np.array([simplex_diameter(C[list(e)]) for e in elems]))
    mesh = Triangulation(np.array(coords), np.array(elems), midpoints=None, validate=False)
    return mesh, parents, diam


@dataclass
class DistResult:
    slack: list
    lhs: list
    rhs: list

    @property
    def min_slack(self):
        return float(min(s.min() for s in self.slack)) if self.slack else 0.0


def verify_dist_recursions(tree, v):
    """Slack ``rhs - lhs`` of the one-step distance recursion on every node.

    ``bisect``: ``dist^2(T) <= (n(n+2))^-1 max h_Tj^2 |v|^2_T + sum dist^2(T_j)``;
    ``red``: ``dist^2(T) <= max h_Tj^2 |v|^2_T / 2 + sum dist^2(T_j)``.
    """
    mesh = tree.mesh
    if v.mesh is not mesh:
        raise InputError("function must live on the tree's fine mesh")
    n = mesh.dim
    vals = v.broken_values
    int_v = mesh.volumes * vals.mean(axis=1)
    int_v2 = mesh.volumes * (np.sum(vals ** 2, axis=1) + np.sum(vals, axis=1) ** 2) / ((n + 1) * (n + 2))
    energy = mesh.volumes * np.sum(v.gradients ** 2, axis=1)
    depth = len(tree.node_of) - 1
    dist2, en = [], []
    for lev in range(depth + 1):
        m = len(tree.diam[lev])
        vol = np.bincount(tree.node_of[lev], weights=mesh.volumes, minlength=m)
        s1 = np.bincount(tree.node_of[lev], weights=int_v, minlength=m)
        s2 = np.bincount(tree.node_of[lev], weights=int_v2, minlength=m)
        dist2.append(np.maximum(s2 - s1 ** 2 / vol, 0.0))
        en.append(np.bincount(tree.node_of[lev], weights=energy, minlength=m))
    gamma = 1.0 / (n * (n + 2)) if tree.mode == "bisect" else 0.5
    slack, lhs, rhs = [], [], []
    for lev in range(depth):
        par = tree.parent[lev + 1]
        m = len(tree.diam[lev])
        hmax = np.zeros(m)
        np.maximum.at(hmax, par, tree.diam[lev + 1])
        child = np.bincount(par, weights=dist2[lev + 1], minlength=m)
        r = gamma * hmax ** 2 * en[lev] + child
        lhs.append(dist2[lev])
        rhs.append(r)
        slack.append(r - dist2[lev])
    return DistResult(slack, lhs, rhs)


# ------------------------------------------------------- eigenvalue lemma
def cycle_matrices(J):
    """Matrices ``A`` (order J-1), ``B`` and ``C`` (order J) of the eigenvalue lemma."""
    if J < 2:
        raise InputError("J must be >= 2")
    A = 2 * np.eye(J - 1) - np.eye(J - 1, k=1) - np.eye(J - 1, k=-1)
    # cyclic difference form sum (x_{j+1} - x_j)^2, also right for J = 2
    D = np.eye(J, k=1) - np.eye(J)
    D[J - 1, 0] = 1.0
    C = D.T @ D
    e = np.zeros(J)
    e[[0, J - 1]] = 1.0
    B = C + np.outer(e, e)
    return A, B, C


def lemma42_spectra(J, n_samples=10_000, seed=0):
    """Analytic vs computed spectra and a constrained Rayleigh brute force.

    Returns a dict with the analytic and computed eigenvalues of ``A``,
    ``B``, ``C``, the target ``1 / (2 (1 - cos(pi/J)))`` and the largest
    sampled quotient ``|x|^2 / sum (x_{j+1} - x_j)^2`` over random ``x``
    with ``min x <= 0 <= max x``.
    """
    A, B, C = cycle_matrices(J)
    k = np.arange(1, J)
    analytic = {
        "A": np.sort(2 * (1 - np.cos(k * np.pi / J))),
        "B": np.sort(2 * (1 - np.cos(np.arange(1, J + 1) * np.pi / J))),
        "C": np.sort(2 - 2 * np.cos(2 * np.arange(J) * np.pi / J)),
    }
    computed = {name: sym_eigen(M)[0] for name, M in (("A", A), ("B", B), ("C", C))}
    target = 1.0 / (2 * (1 - math.cos(math.pi / J)))
    rng = check_rng(seed)
    X = rng.standard_normal((n_samples, J))
    # shift each sample so that it attains a sign change
    mu = rng.uniform(X.min(axis=1), X.max(axis=1))
    X = X - mu[:, None]
    den = np.sum((np.roll(X, -1, axis=1) - X) ** 2, axis=1)
    brute = float(np.max(np.sum(X * X, axis=1) / den))
    # the extremal vector of the lemma: x = (0, sin(j pi / J))
    x = np.concatenate([[0.0], np.sin(np.arange(1, J) * np.pi / J)])
    witness = float(x @ x / np.sum((np.roll(x, -1) - x) ** 2))
    return {
        "J": J,
        "analytic": analytic,
        "computed": computed,
        "max_deviation": max(float(np.max(np.abs(analytic[n] - computed[n]))) for n in analytic),
        "target": target,
        "brute_force_max": brute,
        "witness": witness,
        "lambda_min_nonzero_C": float(computed["C"][1]) if J > 1 else None,
    }


# -------------------------------------------------------------- Helmholtz
@dataclass
class HelmholtzResult:
    alpha: FeFunction
    beta: FeFunction
    residual: float
    norm_p0: float
    pythagoras: tuple = None


def _rot(g):
    return np.stack([-g[:, 1], g[:, 0]], axis=1)


def verify_helmholtz(mesh, p0, u_hat=None):
    """Split ``p0 = grad_NC alpha + Curl beta`` on a simply connected 2D mesh.

    ``alpha`` is in ``CR_zero`` and ``beta`` in ``S1_free`` with zero mean.
    If ``u_hat`` (``CR_zero`` on ``mesh``) is given, the Pythagoras split
    ``||p0 - grad u_hat||^2 = ||grad(alpha - u_hat)||^2 + ||grad beta||^2`` is
    returned as ``(lhs, rhs)``.
    """
    check_mesh(mesh, dim=2)
    if mesh.euler_characteristic() != 1 or not mesh.is_connected():
        raise InputError("the discrete Helmholtz decomposition needs a simply connected domain")
    if isinstance(p0, FeFunction):
        g = p0.gradients
    else:
        g = np.asarray(p0, dtype=float)
    if g.shape != (mesh.n_elements, 2):
        raise InputError("p0 must be a piecewise constant vector field on the mesh")
    vol = mesh.volumes
    Va = FeSpace(mesh, "CR_zero")
    Ga = mesh.barycentric_gradients
    # (p0, grad w) per local vertex basis, mapped through the broken operator
    local = vol[:, None] * np.einsum("kd,kjd->kj", g, Ga)
    A = assemble_stiffness(Va)
    a = spla.spsolve(A.tocsc(), Va.broken.T @ local.ravel()) if Va.n_dofs else np.zeros(0)
    alpha = FeFunction(Va, np.atleast_1d(a))
    Vb = FeSpace(mesh, "S1_free")
    localb = vol[:, None] * np.einsum("kd,kjd->kj", g, np.stack([_rot(Ga[:, j]) for j in range(3)], axis=1))
    Ab = assemble_stiffness(Vb).tocsc()
    rhs = Vb.broken.T @ localb.ravel()
    # drop the first dof to remove the constants, then pin the mean
    b = np.zeros(Vb.n_dofs)
    b[1:] = spla.spsolve(Ab[1:, 1:], rhs[1:])
    beta = FeFunction(Vb, b)
    Mb = Vb.broken.T @ np.repeat(vol / 3, 3)
    beta = FeFunction(Vb, b - (Mb @ b) / vol.sum())
    diff = g - alpha.gradients - _rot(beta.gradients)
    residual = math.sqrt(float(vol @ np.sum(diff ** 2, axis=1)))
    norm_p0 = math.sqrt(float(vol @ np.sum(g ** 2, axis=1)))
    pyth = None
    if u_hat is not None:
        if u_hat.mesh is not mesh:
            raise InputError("u_hat must live on the same mesh")
        lhs = float(vol @ np.sum((g - u_hat.gradients) ** 2, axis=1))
        d = alpha.gradients - u_hat.gradients
        rhs_ = float(vol @ np.sum(d ** 2, axis=1)) + beta.energy_norm() ** 2
        pyth = (lhs, rhs_)
    return HelmholtzResult(alpha, beta, residual, norm_p0, pyth)


# ------------------------------------------------------------------- suite
def random_bisection(points, rng, max_level=6, steps=12):
    mesh = single_simplex(points)
    for _ in range(steps):
        cand = np.flatnonzero(mesh.levels < max_level - 1)
        if cand.size == 0:
            break
        mesh = refine_conforming(mesh, [int(rng.choice(cand))])
    return mesh


def random_triangle(rng):
    while True:
        P = rng.uniform(-1, 1, size=(3, 2))
        try:
            mesh = single_simplex(P)
        except InputError:
            continue
        if mesh.angles.min() > 0.2:
            return P


def random_trace_case(rng, n):
    root = rng.uniform(-1, 1, size=(n + 1, n))
    while abs(np.linalg.det(root[1:] - root[0])) < 0.1:
        root = rng.uniform(-1, 1, size=(n + 1, n))
    mesh = single_simplex(root, int(rng.integers(n)) if n == 3 else 0)
    for _ in range(int(rng.integers(1, 6))):
        mesh = refine_conforming(mesh, [int(rng.integers(mesh.n_elements))])
    V = FeSpace(mesh, "CR_free")
    v = FeFunction(V, rng.standard_normal(V.n_dofs))
    P = int(rng.integers(n + 1))
    lhs, rhs = trace_identity_check(mesh, v, P, [i for i in range(n + 1) if i != P])
    scale = max(1.0, float(np.abs(v.broken_values).max()))
    return lhs, rhs, scale


def _result(name, computed, bound, anchor, mesh_id="", tol=CERT_TOL):
    return ExtremalResult(name, float(computed), float(bound), None, mesh_id, anchor, tol)


def _suite_tasks(seed):
    rng = check_rng(seed)
    tasks = []
    for i in range(4):
        P = random_triangle(rng)
        tasks.append((f"poincare[{i}]", lambda P=P, s=int(rng.integers(2**31)):
                      extremal_poincare(random_bisection(P, check_rng(s)))))
    sq = unit_square(2)
    cst = K.evaluate_constants(K.ConstantsInput.from_mesh(sq))
    for kind in ("J1", "angle_weighted"):
        tasks.append((f"enrich[{kind}]", lambda kind=kind: extremal_operator_bound(sq, kind, consts=cst)))
    tasks.append(("enrich[quasi_JQI]", lambda: extremal_operator_bound(sq, "quasi_JQI", overlap=range(0, 16, 3), consts=cst)))
    for name, P in (("right-isosceles", [[0, 0], [1, 0], [0, 1]]),
                    ("equilateral", [[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])):
        tasks.append((f"inverse[{name}]", lambda P=P: extremal_inverse(P)))
    for r in range(3):
        tasks.append((f"friedrichs[{r}]", lambda r=r: extremal_friedrichs(refine_uniform(unit_square(1), r))))
    pair = MeshPair.from_refinement(sq, [0, 5, 9])
    tasks.append(("inc_interpolation", lambda: extremal_inc(pair)))
    tasks.append(("qi_first_order", lambda: extremal_quasi_interpolation(pair)))
    tasks.append(("dqi_first_order", lambda: extremal_quasi_interpolation(pair, discrete=True)))

    def eigen_lemma():
        worst = max(lemma42_spectra(J, n_samples=2000, seed=seed)["brute_force_max"]
                    / lemma42_spectra(J, n_samples=1, seed=seed)["target"] for J in range(2, 13))
        return _result("eigen_lemma_brute_force_ratio", worst, 1.0, "eigenvalue lemma")

    def dist(mode):
        tree = dist_tree([[0, 0], [1, 0], [0, 1]], depth=4, mode=mode)
        kind = "CR_free" if mode == "bisect" else "S1_free"
        V = FeSpace(tree.mesh, kind)
        s = check_rng(seed)
        worst = min(verify_dist_recursions(tree, FeFunction(V, s.standard_normal(V.n_dofs))).min_slack
                    for _ in range(10))
        return _result(f"dist_recursion[{mode}]", -worst, 0.0, "distance recursion", _mesh_id(tree.mesh), 1e-12)

    def trace():
        s = check_rng(seed)
        worst = max(abs(l - r) / sc for l, r, sc in (random_trace_case(s, 2 + (i % 2)) for i in range(20)))
        return _result("trace_identity", worst, 0.0, "discrete trace identity", tol=1e-12)

    tasks += [("eigen_lemma", eigen_lemma), ("dist[bisect]", lambda: dist("bisect")),
              ("dist[red]", lambda: dist("red")), ("trace_identity", trace)]
    return tasks


def run_suite(seed=0, tol=CERT_TOL, workers=1):
    """Run the default certification suite; results sorted by task name."""
    tasks = _suite_tasks(seed)

    def run(task):
        res = task[1]()
        if res.tol == CERT_TOL:
            res.tol = tol
        return res

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    for (name, _), res in zip(tasks, results):
        res.name = name
    return sorted(results, key=lambda r: r.name)


def report_json(results, **kw):
    return json.dumps([r.to_dict() for r in results], **kw)
