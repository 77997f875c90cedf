import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fembounds.errors import DefinitenessError, InputError
from fembounds.fem import FeFunction, FeSpace, integral_mean
from fembounds.mesh import MeshPair, Triangulation, l_shape, refine_conforming, unit_square
from fembounds.verify import (dist_tree, extremal_friedrichs, extremal_inc, extremal_inverse,
                              extremal_operator_bound, extremal_poincare,
                              extremal_quasi_interpolation, extremal_ratio,
                              inc_elementwise_ratios, cycle_matrices, lemma42_spectra,
                              random_bisection, random_triangle, report_json, run_suite,
                              verify_dist_recursions, verify_helmholtz)

seeds = st.integers(0, 2**32 - 1)


def test_extremal_ratio_on_a_subspace():
    N = np.diag([3.0, 2.0, 1.0])
    lam, x = extremal_ratio(N, np.eye(3))
    assert lam == pytest.approx(3.0) and abs(x[0]) > 0.99
    basis = np.array([[0.0, 0], [1, 0], [0, 1]])
    lam, x = extremal_ratio(N, np.eye(3), basis)
    assert lam == pytest.approx(2.0) and x[0] == 0
    with pytest.raises(DefinitenessError):
        extremal_ratio(N, np.diag([1.0, 1.0, 0.0]))


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_poincare_certificate_on_random_bisections(seed):
    rng = np.random.default_rng(seed)
    mesh = random_bisection(random_triangle(rng), rng, max_level=5, steps=6)
    res = extremal_poincare(mesh)
    assert res.passed and res.bound == pytest.approx(3 / 8)


def test_poincare_rejects_disconnected_meshes():
    coords = np.array([[0.0, 0], [1, 0], [0, 1], [3, 0], [4, 0], [3, 1]])
    mesh = Triangulation(coords, [[0, 1, 2], [3, 4, 5]])
    with pytest.raises(InputError):
        extremal_poincare(mesh)


def test_inverse_estimate():
    right = extremal_inverse([[0, 0], [1, 0], [0, 1]])
    assert right.details["h2_lambda"] == pytest.approx(72, abs=1e-9)
    assert right.computed == pytest.approx(right.bound, rel=1e-12)
    eq = extremal_inverse([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    assert eq.details["h2_lambda"] == pytest.approx(24, abs=1e-9)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_inverse_closed_form(seed):
    res = extremal_inverse(random_triangle(np.random.default_rng(seed)))
    assert res.details["closed_form"] == pytest.approx(res.details["lambda_max"], rel=1e-10)
    assert res.passed


def test_enrichment_certificates():
    mesh = unit_square(2)
    for kind in ("J1", "angle_weighted"):
        res = extremal_operator_bound(mesh, kind)
        assert res.passed and res.computed < 1.6002
    jqi = extremal_operator_bound(mesh, "quasi_JQI", overlap=range(0, 16, 3))
    assert jqi.passed
    with pytest.raises(InputError):
        extremal_operator_bound(mesh, "node_max")


def test_friedrichs_and_interpolation_certificates():
    assert extremal_friedrichs(l_shape(1)).passed
    pair = MeshPair.from_refinement(unit_square(2), [0, 5, 9])
    inc = extremal_inc(pair)
    assert inc.passed and inc.bound == pytest.approx(2 ** -0.5)
    assert extremal_quasi_interpolation(pair).passed
    assert extremal_quasi_interpolation(pair, discrete=True).passed


def test_elementwise_inc_ratio_bounded():
    pair = MeshPair.from_refinement(unit_square(2), list(range(16)))
    V = FeSpace(pair.fine, "CR_zero")
    v = FeFunction(V, np.random.default_rng(0).standard_normal(V.n_dofs))
    assert inc_elementwise_ratios(pair, v).max() <= 2 ** -0.5


@pytest.mark.parametrize("mode,kind", [("bisect", "CR_free"), ("red", "S1_free")])
def test_distance_recursions(mode, kind):
    tree = dist_tree([[0, 0], [1, 0], [0.2, 0.9]], depth=3, mode=mode)
    V = FeSpace(tree.mesh, kind)
    rng = np.random.default_rng(1)
    for _ in range(5):
        res = verify_dist_recursions(tree, FeFunction(V, rng.standard_normal(V.n_dofs)))
        assert res.min_slack >= -1e-12
    with pytest.raises(InputError):
        dist_tree([[0, 0], [1, 0], [0, 1]], mode="green")


def test_lemma_matrices_small_case():
    A, B, C = cycle_matrices(3)
    np.testing.assert_array_equal(A, [[2, -1], [-1, 2]])
    np.testing.assert_array_equal(C, [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])
    np.testing.assert_array_equal(B - C, [[1, 0, 1], [0, 0, 0], [1, 0, 1]])
    with pytest.raises(InputError):
        cycle_matrices(1)


@given(st.integers(2, 12))
@settings(max_examples=11, deadline=None)
def test_lemma_spectra(J):
    out = lemma42_spectra(J, n_samples=2000, seed=J)
    assert out["max_deviation"] <= 1e-12
    assert out["brute_force_max"] <= out["target"]
    assert out["witness"] == pytest.approx(out["target"])


def test_helmholtz_split_on_the_l_shape():
    mesh = refine_conforming(l_shape(1), [0, 3, 8])
    g = np.random.default_rng(0).standard_normal((mesh.n_elements, 2))
    u = FeFunction(FeSpace(mesh, "CR_zero"),
                   np.random.default_rng(1).standard_normal(FeSpace(mesh, "CR_zero").n_dofs))
    res = verify_helmholtz(mesh, g, u_hat=u)
    assert res.residual <= 1e-9 * res.norm_p0
    assert res.pythagoras[0] == pytest.approx(res.pythagoras[1], rel=1e-10)
    assert abs(integral_mean(res.beta)) <= 1e-12


def test_suite_report():
    results = run_suite(seed=0)
    assert all(r.passed for r in results)
    doc = json.loads(report_json(results))
    assert {d["status"] for d in doc} == {"pass"}
    assert set(doc[0]) >= {"name", "computed", "bound", "margin", "status", "mesh_id"}
