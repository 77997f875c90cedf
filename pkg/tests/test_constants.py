import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fembounds.constants import (REFERENCE_VALUES, ConstantsInput, c_apx, c_apx_dqi, c_apx_j1,
                                 c_inv, domain_width, evaluate_constants, poincare_constant)
from fembounds.errors import DomainError, InputError
from fembounds.mesh import l_shape, refine_uniform, single_simplex, reference_tetrahedron, unit_square

angles = st.floats(0.05, math.pi / 3)


def test_poincare_constants():
    assert poincare_constant(2) == pytest.approx(math.sqrt(3 / 8), rel=1e-15)
    assert poincare_constant(3) == pytest.approx(math.sqrt(5) / 3, rel=1e-15)
    with pytest.raises(InputError):
        poincare_constant(4)


def test_inverse_constant_at_right_angles():
    assert c_inv(math.pi / 4) == pytest.approx(math.sqrt(72), rel=1e-12)
    assert c_inv(math.pi / 3) == pytest.approx(math.sqrt(24), rel=1e-12)


@given(angles)
def test_inverse_constant_decreases_with_the_angle(w):
    assert c_inv(w) >= c_inv(min(math.pi / 3, w + 0.01)) - 1e-12


@given(angles, st.integers(3, 12), st.integers(2, 8))
def test_j1_is_sharper_than_the_generic_bound(w, m_int, m_bd):
    assert c_apx_j1(w, m_int, m_bd) <= c_apx(w, max(m_int, m_bd)) * (1 + 1e-12)
    assert c_apx_dqi(w, m_int, m_bd) >= c_apx_j1(w, m_int, m_bd) * (1 - 1e-12)


@pytest.mark.parametrize("w", [0.0, -0.1, math.pi / 3 + 0.01, math.pi])
def test_angle_domain(w):
    with pytest.raises(DomainError):
        c_inv(w)


def test_example_values():
    assert c_apx(math.pi / 4, 8) == pytest.approx(3.3729, abs=1e-4)
    report = evaluate_constants(ConstantsInput.from_mesh(unit_square(2)))
    assert report["kappa"] == pytest.approx(0.29823, abs=5e-5)
    assert report["kappa_CR"] == pytest.approx(2 ** -0.5)
    assert report["C_n"] == pytest.approx(math.sqrt(3 / 8))


def test_report_structure_and_flags():
    report = evaluate_constants(ConstantsInput.from_mesh(unit_square(2)))
    d = json.loads(report.to_json())
    assert set(d) == {"inputs", "constants", "paper_reference_values", "flags"}
    assert d["paper_reference_values"] == pytest.approx(REFERENCE_VALUES)
    flagged = {f["constant"]: f for f in d["flags"]}
    for name in ("Lambda1_sq_CFEM", "Lambda3_CFEM", "Lambda1_sq_CRFEM", "Lambda3_CRFEM",
                 "c_apx_J1"):
        assert name in flagged
    cand = flagged["Lambda1_sq_CRFEM"]["candidates"]
    assert min(abs(v - 34.97) for v in cand.values()) < 0.01
    assert d["constants"]["theta0_CFEM"] > 0


def test_no_flags_away_from_the_example_angle():
    report = evaluate_constants(ConstantsInput(n=2, omega0=0.5, m_int=6, m_bd=3,
                                               h_max=0.1, domain_width=1.0))
    assert report.flags == []


def test_three_dimensional_inputs():
    mesh = refine_uniform(single_simplex(reference_tetrahedron()), 3)
    report = evaluate_constants(ConstantsInput.from_mesh(mesh))
    assert report["C_n"] == pytest.approx(math.sqrt(5) / 3)
    assert report["c_apx"] is None and report["c_inv"] is None


def test_input_validation():
    with pytest.raises(InputError):
        ConstantsInput(n=4)
    with pytest.raises(InputError):
        ConstantsInput(n=2, m_int=-1)
    with pytest.raises(InputError):
        ConstantsInput(n=3, omega0=0.5)
    with pytest.raises(InputError):
        ConstantsInput(n=2, h_max=-1.0)


def test_domain_width():
    assert domain_width(unit_square(2)) == pytest.approx(1.0)
    assert domain_width(l_shape(1)) == pytest.approx(2.0)
