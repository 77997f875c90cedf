"""Residual estimators, Doerfler marking and the adaptive loop.

Both the conforming (``"cfem"``) and the Crouzeix-Raviart (``"crfem"``)
discretisations of ``-Laplace u = f`` with homogeneous Dirichlet data are
supported.  Every consecutive mesh pair of a run can be checked against the
stability axiom (A1) and discrete reliability (A3) with the closed-form
constants.
"""
import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import constants as K
from .errors import FemboundsError, InputError
from .fem import FeSpace, element_l2_sq, solve_poisson
from .mesh import MeshPair, mesh_metrics, refine_uniform
from .validation import check_mesh, check_theta

__all__ = [
    "METHODS",
    "EstimatorBreakdown",
    "estimate",
    "dorfler_mark",
    "AxiomCheck",
    "axiom_constants",
    "check_axioms",
    "IterationRecord",
    "AfemHistory",
    "afem_run",
    "uniform_run",
    "convergence_rate",
    "AdaptiveSolver",
]

METHODS = {"cfem": "S1_zero", "crfem": "CR_zero"}


def _method(which):
    key = str(which).lower()
    aliases = {"c": "cfem", "cr": "crfem", "cfem": "cfem", "crfem": "crfem"}
    if key not in aliases:
        raise InputError(f"unknown method {which!r}; use 'cfem' or 'crfem'")
    return aliases[key]


@dataclass
class EstimatorBreakdown:
    """Per-element volume and jump contributions of ``eta^2``."""

    volume: np.ndarray
    jump: np.ndarray

    @property
    def indicators(self):
        return self.volume + self.jump

    def total(self, subset=None):
        """``eta^2`` over all elements or over the given element ids."""
        ind = self.indicators
        if subset is None:
            return float(ind.sum())
        return float(ind[np.asarray(subset, dtype=np.int64)].sum())

    @property
    def eta(self):
        return math.sqrt(self.total())


def _jumps(mesh, grads, which):
    """Squared jump integrals per side: normal (cfem) or tangential (crfem)."""
    sides = mesh.sides
    P = mesh.coordinates[sides]
    t = P[:, 1] - P[:, 0]
    t = t / np.linalg.norm(t, axis=1)[:, None]
    direction = t if which == "crfem" else np.stack([t[:, 1], -t[:, 0]], axis=1)
    left = mesh.side_elements[:, 0]
    right = mesh.side_elements[:, 1]
    interior = right >= 0
    jump = np.sum(grads[left] * direction, axis=1)
    jump[interior] -= np.sum(grads[right[interior]] * direction[interior], axis=1)
    sq = mesh.side_measures * jump ** 2
    if which == "cfem":
        sq[~interior] = 0.0
    return sq


def estimate(mesh, solution, f, which, degree=4):
    """Residual estimator contributions.

    ``eta^2(K) = |K| ||f||^2_K + |K|^(1/2) sum_E ||jump||^2_E`` with normal
    jumps of the gradient over interior sides (cfem) or tangential jumps
    over all sides, the trace on boundary sides (crfem).
    """
    which = _method(which)
    check_mesh(mesh, dim=2)
    if solution.mesh is not mesh:
        raise InputError("solution lives on a different mesh")
    if solution.kind not in (METHODS[which], METHODS[which].replace("zero", "free")):
        raise InputError(f"a {solution.kind} solution does not match method {which}")
    vol = mesh.volumes
    volume = vol * element_l2_sq(mesh, f, degree)
    sq = _jumps(mesh, solution.gradients, which)
    jump_sum = sq[mesh.element_sides].sum(axis=1)
    return EstimatorBreakdown(volume, np.sqrt(vol) * jump_sum)


def dorfler_mark(indicators, theta):
    """Minimal set ``M`` with ``theta * sum(eta^2) <= sum_M eta^2``.

    Indicators are sorted descending with ties broken by ascending element
    id; returns the sorted element ids.
    """
    if isinstance(indicators, EstimatorBreakdown):
        indicators = indicators.indicators
    theta = check_theta(theta)
    ind = np.asarray(indicators, dtype=float)
    if np.any(ind < 0):
        raise InputError("indicators must be nonnegative")
    order = np.lexsort((np.arange(len(ind)), -ind))
    csum = np.cumsum(ind[order])
    if csum.size == 0 or csum[-1] == 0.0:
        return np.zeros(0, dtype=np.int64)
    count = int(np.searchsorted(csum, theta * csum[-1], side="left")) + 1
    return np.sort(order[:min(count, len(ind))])


# ------------------------------------------------------------------ axioms
@dataclass
class AxiomCheck:
    delta: float
    a1_lhs: float
    a1_rhs: float
    a3_lhs: float
    a3_rhs: float
    helmholtz_residual: float = None
    pythagoras: tuple = None

    @property
    def a1_ok(self):
        return self.a1_lhs <= self.a1_rhs * (1 + 1e-12) + 1e-14

    @property
    def a3_ok(self):
        return self.a3_lhs <= self.a3_rhs * (1 + 1e-12) + 1e-14

    @property
    def passed(self):
        return self.a1_ok and self.a3_ok


def axiom_constants(pair, which):
    """``(Lambda1, Lambda3)`` from the worst metrics of both meshes.

    ``c_quot`` is taken at its angle bound.
    """
    which = _method(which)
    a, b = mesh_metrics(pair.coarse), mesh_metrics(pair.fine)
    inp = K.ConstantsInput(n=2, omega0=min(a.omega0, b.omega0), m_int=max(a.m_int, b.m_int),
                           m_bd=max(a.m_bd, b.m_bd))
    c = K.evaluate_constants(inp)
    tag = "CFEM" if which == "cfem" else "CRFEM"
    return c[f"Lambda1_{tag}"], c[f"Lambda3_{tag}"]


def check_axioms(pair, f, which, u=None, u_hat=None, helmholtz=None, solver="cg"):
    """Both sides of (A1) and (A3) for a mesh pair.

    Coarse gradients are transferred to the fine mesh through the ancestor
    map (exact, the coarse function is affine on every descendant).  For
    crfem the discrete Helmholtz split of ``grad_NC u`` on the fine mesh is
    computed as well (``helmholtz=None`` means: only for crfem).
    """
    from .verify import verify_helmholtz

    which = _method(which)
    kind = METHODS[which]
    if u is None:
        u = solve_poisson(FeSpace(pair.coarse, kind), f, solver=solver)
    if u_hat is None:
        u_hat = solve_poisson(FeSpace(pair.fine, kind), f, solver=solver)
    fine = pair.fine
    g = u.gradients[pair.ancestor]
    delta = math.sqrt(float(fine.volumes @ np.sum((g - u_hat.gradients) ** 2, axis=1)))
    est = estimate(pair.coarse, u, f, which)
    est_hat = estimate(fine, u_hat, f, which)
    overlap_c = np.array(sorted(pair.overlap), dtype=np.int64)
    overlap_f = np.array([pair.overlap[c] for c in overlap_c], dtype=np.int64)
    l1, l3 = axiom_constants(pair, which)
    a1_lhs = abs(math.sqrt(est.total(overlap_c)) - math.sqrt(est_hat.total(overlap_f)))
    out = AxiomCheck(delta, a1_lhs, l1 * delta, delta ** 2, l3 * est.total(pair.refined))
    if helmholtz is None:
        helmholtz = which == "crfem"
    if helmholtz:
        h = verify_helmholtz(fine, g, u_hat)
        out.helmholtz_residual = h.residual / max(h.norm_p0, 1e-300)
        out.pythagoras = h.pythagoras
    return out


# ------------------------------------------------------------ adaptive loop
@dataclass
class IterationRecord:
    iteration: int
    ndof: int
    eta: float
    marked: int
    theta: float
    delta: float = float("nan")
    a1_lhs: float = float("nan")
    a1_rhs: float = float("nan")
    a3_lhs: float = float("nan")
    a3_rhs: float = float("nan")
    helmholtz_residual: float = float("nan")
    pythagoras_gap: float = float("nan")


CSV_COLUMNS = ["iteration", "ndof", "eta", "marked", "theta", "delta",
               "a1_lhs", "a1_rhs", "a3_lhs", "a3_rhs"]


@dataclass
class AfemHistory:
    method: str
    records: list = field(default_factory=list)
    meshes: list = field(default_factory=list, repr=False)
    metadata: dict = field(default_factory=dict)

    @property
    def ndof(self):
        return np.array([r.ndof for r in self.records])

    @property
    def eta(self):
        return np.array([r.eta for r in self.records])

    def axioms_hold(self):
        """All recorded (A1) and (A3) checks hold."""
        for r in self.records:
            if math.isnan(r.delta):
                continue
            if not (r.a1_lhs <= r.a1_rhs * (1 + 1e-12) + 1e-14
                    and r.a3_lhs <= r.a3_rhs * (1 + 1e-12) + 1e-14):
                return False
        return True

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
            w.writeheader()
            for r in self.records:
                w.writerow(asdict(r))


def _tagging(mesh):
    X, E = mesh.coordinates, mesh.elements
    ref = np.linalg.norm(X[E[:, 0]] - X[E[:, -1]], axis=1)
    return "longest-edge" if np.allclose(ref, mesh.diameters) else "as given by the mesh"


def afem_run(mesh, f, which, theta=0.3, max_ndof=20_000, max_iter=50,
             check=True, solver="cg", keep_meshes=False):
    """Adaptive loop solve - estimate - mark - refine.

    Stops when ``eta = 0``, the number of dofs reaches ``max_ndof`` or after
    ``max_iter`` solves.  With ``check=True`` the axioms are evaluated on
    every consecutive pair and stored in the record of the coarser mesh.
    """
    which = _method(which)
    check_mesh(mesh, dim=2)
    theta = check_theta(theta)
    kind = METHODS[which]
    hist = AfemHistory(which, metadata={"theta": theta, "initial_tagging": _tagging(mesh)})
    u = solve_poisson(FeSpace(mesh, kind), f, solver=solver)
    it = 0
    while True:
        try:
            est = estimate(mesh, u, f, which)
            eta = est.eta
            stop = eta == 0.0 or u.space.n_dofs >= max_ndof or it + 1 >= max_iter
            marked = np.zeros(0, dtype=np.int64) if stop else dorfler_mark(est, theta)
            rec = IterationRecord(it, u.space.n_dofs, eta, len(marked), theta)
            hist.records.append(rec)
            if keep_meshes:
                hist.meshes.append(mesh)
            if stop:
                break
            pair = MeshPair.from_refinement(mesh, marked)
            u_hat = solve_poisson(FeSpace(pair.fine, kind), f, solver=solver)
            if check:
                ax = check_axioms(pair, f, which, u, u_hat)
                rec.delta, rec.a1_lhs, rec.a1_rhs = ax.delta, ax.a1_lhs, ax.a1_rhs
                rec.a3_lhs, rec.a3_rhs = ax.a3_lhs, ax.a3_rhs
                if ax.helmholtz_residual is not None:
                    rec.helmholtz_residual = ax.helmholtz_residual
                    rec.pythagoras_gap = abs(ax.pythagoras[0] - ax.pythagoras[1])
        except FemboundsError as exc:
            raise type(exc)(f"iteration {it}: {exc}") from exc
        mesh, u = pair.fine, u_hat
        it += 1
    hist.final_mesh = mesh
    hist.final_solution = u
    return hist


def uniform_run(mesh, f, which, max_ndof=20_000, rounds_per_step=2, solver="cg"):
    """Uniform refinement sequence (``rounds_per_step`` bisections per step)."""
    which = _method(which)
    kind = METHODS[which]
    hist = AfemHistory(which, metadata={"refinement": "uniform"})
    it = 0
    while True:
        u = solve_poisson(FeSpace(mesh, kind), f, solver=solver)
        est = estimate(mesh, u, f, which)
        hist.records.append(IterationRecord(it, u.space.n_dofs, est.eta, mesh.n_elements, 1.0))
        if u.space.n_dofs >= max_ndof:
            break
        mesh = refine_uniform(mesh, rounds_per_step)
        it += 1
    return hist


def convergence_rate(ndof, eta, last=5):
    """Least-squares slope of ``log eta`` against ``log ndof``."""
    ndof = np.asarray(ndof, dtype=float)[-last:]
    eta = np.asarray(eta, dtype=float)[-last:]
    if len(ndof) < 2:
        raise InputError("need at least two iterations for a rate")
    return float(np.polyfit(np.log(ndof), np.log(eta), 1)[0])


class AdaptiveSolver(BaseEstimator):
    """Estimator wrapper around :func:`afem_run`.

    ``fit(mesh)`` runs the adaptive loop; results are in ``history_``,
    ``mesh_`` and ``solution_``.
    """

    def __init__(self, f=1.0, method="crfem", theta=0.3, max_ndof=20_000, max_iter=50,
                 check_axioms=True, solver="cg"):
        self.f = f
        self.method = method
        self.theta = theta
        self.max_ndof = max_ndof
        self.max_iter = max_iter
        self.check_axioms = check_axioms
        self.solver = solver

    def fit(self, X, y=None):
        hist = afem_run(X, self.f, self.method, self.theta, self.max_ndof, self.max_iter,
                        check=self.check_axioms, solver=self.solver)
        self.history_ = hist
        self.mesh_ = hist.final_mesh
        self.solution_ = hist.final_solution
        self.rate_ = convergence_rate(hist.ndof, hist.eta) if len(hist.records) >= 2 else float("nan")
        return self

    def score(self, X=None, y=None):
        """Negative final estimator value (larger is better)."""
        return -float(self.history_.eta[-1])
