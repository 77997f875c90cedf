"""Closed-form constants of the discrete inequalities and adaptive axioms.

All angle-dependent constants assume two space dimensions.  The input is a
:class:`ConstantsInput`, usually built from a mesh with
:meth:`ConstantsInput.from_mesh`; missing inputs leave the constants that
need them as ``None``.
"""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .errors import DomainError, InputError
from .mesh import mesh_metrics

__all__ = [
    "J11",
    "M_BISECT",
    "REFERENCE_VALUES",
    "ConstantsInput",
    "ConstantsReport",
    "evaluate_constants",
    "poincare_constant",
    "c_apx",
    "c_apx_j1",
    "c_apx_dqi",
    "c_inv",
    "domain_width",
]

# first positive zero of the Bessel function J_1
J11 = 3.831705970208
# uniform bisection rounds that halve the diameter
M_BISECT = {2: 3, 3: 7}

# worked-example values for right isosceles meshes, kept as metadata
REFERENCE_VALUES = {
    "C_n(2)": math.sqrt(3 / 8),
    "C_n(3)": math.sqrt(5) / 3,
    "kappa": 0.29823,
    "c_inv(pi/4)": math.sqrt(72),
    "c_apx(pi/4, M_patch=8)": 3.3729,
    "c_apx_J1(pi/4, M_int=8, M_bd=4)": 1.6002,
    "Lambda1_sq_CFEM": 40.36,
    "Lambda3_CFEM": 9201.0,
    "theta0_CFEM": 2.6e-6,
    "Lambda1_sq_CRFEM": 34.97,
    "Lambda3_CRFEM": 4521.0,
    "theta0_CRFEM": 6.3e-6,
}


def _cot(x):
    return math.cos(x) / math.sin(x)


def _check_angle(omega0):
    omega0 = float(omega0)
    if not 0.0 < omega0 <= math.pi / 3 + 1e-12:
        raise DomainError(
            f"minimal angle {omega0!r} outside (0, pi/3]: no triangle has a larger minimal "
            "angle, and cot(2 w) changes sign beyond pi/4 < w < pi/2")
    return omega0


def poincare_constant(n):
    """``C(n) = ((4 M(n) - 3) / (3 n (n + 2)))^(1/2)``."""
    if n not in M_BISECT:
        raise InputError("dimension must be 2 or 3")
    return math.sqrt((4 * M_BISECT[n] - 3) / (3 * n * (n + 2)))


def c_apx(omega0, m_patch):
    """Enrichment constant for any convex-hull enricher."""
    omega0 = _check_angle(omega0)
    if m_patch < 1:
        raise InputError("M_patch must be positive")
    return math.sqrt(math.sqrt(3) / 2 * _cot(omega0) / (1 - math.cos(math.pi / m_patch)))


def c_apx_j1(omega0, m_int, m_bd):
    """Sharper enrichment constant for the averaging operator ``J1``."""
    omega0 = _check_angle(omega0)
    denom = []
    if m_int > 0:
        denom.append(1 - math.cos(2 * math.pi / m_int))
    if m_bd > 0:
        denom.append(1 - math.cos(math.pi / m_bd))
    if not denom:
        raise InputError("need at least one of M_int, M_bd")
    return math.sqrt(math.sqrt(3) / 2 * _cot(omega0) / min(denom))


def c_apx_dqi(omega0, m_int, m_bd):
    """Constant of the boundary-preserving extension ``S1(T_hat) -> S1(T)``."""
    omega0 = _check_angle(omega0)
    denom = []
    if m_int > 0:
        denom.append(1 - math.cos(math.pi / m_int))
    if m_bd > 0:
        denom.append(1 - math.cos(math.pi / (2 * m_bd - 1)))
    if not denom:
        raise InputError("need at least one of M_int, M_bd")
    return math.sqrt(math.sqrt(3) / 2 * _cot(omega0) / min(denom))


def c_inv(omega0):
    """Inverse estimate ``h_T |grad v| <= c_inv |v|`` on P1 triangles.

    ``c_inv^2 = 24 cot(w) (s + (s^2 - 3)^(1/2))`` with
    ``s = 2 cot(w) - cot(2 w)``.  With ``t = cot(w)`` one has
    ``s = (3 t^2 + 1) / (2 t)`` and ``s^2 - 3 = (3 t^2 - 1)^2 / (4 t^2)``,
    which is evaluated in this cancellation-free form.
    """
    omega0 = _check_angle(omega0)
    t = _cot(omega0)
    return math.sqrt(12 * (3 * t * t + 1 + abs(3 * t * t - 1)))


def domain_width(mesh):
    """Minimal width over hull facet normals (exact in 2D, an upper bound in 3D)."""
    pts = mesh.coordinates[mesh.used_vertices]
    hull = ConvexHull(pts)
    normals = hull.equations[:, :-1]
    proj = pts @ normals.T
    return float(np.min(proj.max(axis=0) - proj.min(axis=0)))


@dataclass
class ConstantsInput:
    """Geometric inputs of the constants.

    Parameters
    ----------
    n : int
    omega0 : float, optional
        Minimal angle in radians, ``0 < omega0 <= pi/3``.
    m_int, m_bd : int, optional
        Largest patch cardinality at interior / boundary nodes.
    h_max : float, optional
    domain_width : float, optional
    c_quot : float, optional
        Neighbour area ratio; the angle bound ``2 cot/sin`` is used if absent.
    mesh : Triangulation, optional
        Enables the mesh-dependent ``c(T)``.
    """

    n: int = 2
    omega0: float = None
    m_int: int = None
    m_bd: int = None
    h_max: float = None
    domain_width: float = None
    c_quot: float = None
    mesh: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n not in (2, 3):
            raise InputError("dimension must be 2 or 3")
        if self.omega0 is not None:
            if self.n != 2:
                raise InputError("angle-based constants are only defined in 2D")
            self.omega0 = _check_angle(self.omega0)
        for name in ("m_int", "m_bd"):
            val = getattr(self, name)
            if val is not None and (int(val) != val or val < 0):
                raise InputError(f"{name} must be a nonnegative integer")
        for name in ("h_max", "domain_width", "c_quot"):
            val = getattr(self, name)
            if val is not None and not (val > 0 and math.isfinite(val)):
                raise InputError(f"{name} must be positive and finite")

    @property
    def m_patch(self):
        if self.m_int is None or self.m_bd is None:
            return None
        return max(self.m_int, self.m_bd)

    @classmethod
    def from_mesh(cls, mesh, width=None, use_actual_c_quot=False):
        """Inputs measured on a 2D mesh (``c_quot`` left to its bound by default)."""
        if mesh.dim != 2:
            return cls(n=mesh.dim, h_max=float(mesh.diameters.max()),
                       domain_width=domain_width(mesh) if width is None else width, mesh=mesh)
        m = mesh_metrics(mesh)
        return cls(n=2, omega0=m.omega0, m_int=m.m_int, m_bd=m.m_bd, h_max=m.h_max,
                   domain_width=domain_width(mesh) if width is None else width,
                   c_quot=m.c_quot if use_actual_c_quot else None, mesh=mesh)

    def to_dict(self):
        d = asdict(self)
        d.pop("mesh")
        return d


@dataclass
class ConstantsReport:
    """Evaluated constants plus reference metadata and discrepancy flags."""

    inputs: ConstantsInput
    constants: dict
    paper_reference_values: dict
    flags: list

    def __getitem__(self, name):
        return self.constants[name]

    def to_dict(self):
        return {
            "inputs": self.inputs.to_dict(),
            "constants": dict(self.constants),
            "paper_reference_values": dict(self.paper_reference_values),
            "flags": list(self.flags),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _c_hat(inp, omega0):
    """``max ((1/4 + 2/j11^2) / (1 - |cos angle|))^(1/2)`` over the mesh or angle bound."""
    num = 0.25 + 2 / J11 ** 2
    if inp.mesh is not None and inp.mesh.dim == 2:
        worst = float(np.max(np.abs(np.cos(inp.mesh.angles))))
    else:
        worst = max(math.cos(omega0), abs(math.cos(math.pi - 2 * omega0)))
    return math.sqrt(num / (1 - worst))


def _theta0(l1_sq, l3):
    return 1.0 / (1.0 + l1_sq * l3)


def evaluate_constants(inp):
    """Evaluate every constant available for the given inputs.

    Returns
    -------
    ConstantsReport
    """
    if not isinstance(inp, ConstantsInput):
        raise InputError("expected a ConstantsInput")
    n = inp.n
    C = poincare_constant(n)
    kappa = math.sqrt(1 / 48 + 1 / J11 ** 2)
    out = {
        "M_n": M_BISECT[n],
        "C_n": C,
        "c_P": poincare_constant(2),
        "kappa": kappa,
        "kappa_NC": math.sqrt(C ** 2 + 1 / ((n + 1) * (n + 2) * n ** 2)),
        "kappa_CR": math.sqrt(1 / 8 + 3 / 8),
        "j11": J11,
    }
    names = ["c_apx", "c_apx_J1", "c_apx_dQI", "c_inv", "c_F", "c_dF", "c_tr", "c_sr",
             "c_quot_bound", "c_quot", "c_omega", "c_hat_T", "C2",
             "Lambda1_sq_CFEM", "Lambda1_CFEM", "Lambda3_CFEM", "theta0_CFEM",
             "Lambda1_sq_CRFEM", "Lambda1_CRFEM", "Lambda3_CRFEM", "theta0_CRFEM"]
    out.update(dict.fromkeys(names))
    if inp.domain_width is not None:
        out["c_F"] = inp.domain_width / math.pi
    flags = []
    w = inp.omega0
    if w is not None:
        cot = _cot(w)
        out["c_inv"] = ci = c_inv(w)
        out["c_quot_bound"] = 2 * cot / math.sin(w)
        cq = inp.c_quot if inp.c_quot is not None else out["c_quot_bound"]
        out["c_quot"] = cq
        out["c_sr"] = 2 * math.sqrt(cot) * (1 + math.sqrt(cq)) ** 2
        out["c_tr"] = math.sqrt(4 * cot * (1 + ci))
        out["c_hat_T"] = _c_hat(inp, w)
        out["Lambda1_sq_CFEM"] = 6 * math.sqrt(cot) * (1 + math.sqrt(cq)) ** 2
        out["Lambda1_sq_CRFEM"] = 48 * cot * (2 * math.sin(w)) ** -0.5
        out["Lambda1_CFEM"] = math.sqrt(out["Lambda1_sq_CFEM"])
        out["Lambda1_CRFEM"] = math.sqrt(out["Lambda1_sq_CRFEM"])
        if inp.m_patch is not None:
            ca = c_apx(w, max(inp.m_patch, 1))
            out["c_apx"] = ca
            if inp.m_int or inp.m_bd:
                out["c_apx_J1"] = c_apx_j1(w, inp.m_int, inp.m_bd)
                out["c_apx_dQI"] = c_apx_dqi(w, inp.m_int, inp.m_bd)
            out["c_omega"] = math.sin(w) ** -max(inp.m_bd - 1, inp.m_int / 2)
            out["C2"] = ((kappa + 1) / J11
                         + (1 + ci) * out["c_omega"] * ca * (1 / J11 + out["c_hat_T"]))
            apx = kappa ** 2 + ca ** 2
            out["Lambda3_CFEM"] = 4 * cot * apx * (1 + 6 * math.sqrt(cot) * (1 + ci))
            out["Lambda3_CRFEM"] = 12 * cot * apx * (1 + ci)
            out["theta0_CFEM"] = _theta0(out["Lambda1_sq_CFEM"], out["Lambda3_CFEM"])
            out["theta0_CRFEM"] = _theta0(out["Lambda1_sq_CRFEM"], out["Lambda3_CRFEM"])
            if out["c_apx_J1"] is not None and inp.h_max is not None and out["c_F"] is not None:
                cj = out["c_apx_J1"]
                out["c_dF"] = inp.h_max * cj + out["c_F"] * (1 + ci * cj)
        flags = _reference_flags(out, w, cq)
    return ConstantsReport(inp, out, dict(REFERENCE_VALUES), flags)


def _reference_flags(out, omega0, c_quot_used, rtol=0.01):
    """Compare worked-example values with the formulas at ``omega0 = pi/4``."""
    if abs(omega0 - math.pi / 4) > 1e-12:
        return []
    cot, sin = 1.0, math.sin(math.pi / 4)
    candidates = {
        "Lambda1_sq_CFEM": {
            "formula(c_quot=bound 2cot/sin)": 6 * (1 + math.sqrt(2 * cot / sin)) ** 2,
            "formula(c_quot=2)": 6 * (1 + math.sqrt(2)) ** 2,
            "CRFEM formula 48cot(2sin)^(-1/2)": 48 * cot * (2 * sin) ** -0.5,
        },
        "Lambda1_sq_CRFEM": {
            "formula 48cot(2sin)^(-1/2)": 48 * cot * (2 * sin) ** -0.5,
            "CFEM formula with c_quot=2": 6 * (1 + math.sqrt(2)) ** 2,
        },
    }
    flags = []
    for name in ("Lambda1_sq_CFEM", "Lambda3_CFEM", "theta0_CFEM",
                 "Lambda1_sq_CRFEM", "Lambda3_CRFEM", "theta0_CRFEM"):
        value, ref = out.get(name), REFERENCE_VALUES[name]
        if value is None:
            continue
        rel = abs(value - ref) / ref
        if rel > rtol:
            flag = {"constant": name, "formula_value": value, "reference_value": ref,
                    "ratio": value / ref}
            if name in candidates:
                flag["candidates"] = candidates[name]
                flag["note"] = ("example value matches a different formula; "
                                "the Lambda1 examples for the two methods appear swapped")
            elif name.startswith("Lambda3"):
                flag["note"] = ("reference is about 2*sqrt(3) times the formula value; "
                                "the scaling of c_apx in this example is ambiguous")
            else:
                flag["note"] = "follows from the Lambda1/Lambda3 discrepancies"
            flags.append(flag)
    j1 = c_apx_j1(math.pi / 4, 8, 4)
    ref = REFERENCE_VALUES["c_apx_J1(pi/4, M_int=8, M_bd=4)"]
    flags.append({"constant": "c_apx_J1", "formula_value": j1, "reference_value": ref,
                  "ratio": j1 / ref,
                  "candidates": {"factor 3/4 in place of sqrt(3)/2":
                                 math.sqrt(0.75 / (1 - math.cos(math.pi / 4)))},
                  "note": "example value does not follow from the stated formula"})
    apx = c_apx(math.pi / 4, 8)
    ref = REFERENCE_VALUES["c_apx(pi/4, M_patch=8)"]
    flags.append({"constant": "c_apx", "formula_value": apx, "reference_value": ref,
                  "ratio": apx / ref,
                  "note": "reference is truncated to four decimals; formula value is 3.37299"})
    return flags
