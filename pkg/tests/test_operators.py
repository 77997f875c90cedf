import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from fembounds.errors import InputError, PreconditionError
from fembounds.fem import FeFunction, FeSpace, prolong
from fembounds.mesh import MeshPair, l_shape, unit_square
from fembounds.operators import (ENRICHERS, DiscreteQuasiInterpolator, Enricher,
                                 EnrichmentKind, NonconformingInterpolator, QuasiInterpolator,
                                 convex_hull_violation, discrete_quasi_interpolate, enrich,
                                 inc_interpolate, jqi_consistency, quasi_interpolate)

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def pair():
    return MeshPair.from_refinement(unit_square(2), [0, 5, 9])


def _random(space, seed):
    return FeFunction(space, np.random.default_rng(seed).standard_normal(space.n_dofs))


def _overlap_nodes(pair):
    coarse = pair.coarse
    nodes = np.unique(coarse.elements[list(pair.overlap)])
    return nodes[~coarse.dirichlet_vertices[nodes]]


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_inc_fixes_cr_functions(seed):
    mesh = l_shape(1)
    V = FeSpace(mesh, "CR_free")
    v = _random(V, seed)
    np.testing.assert_allclose(inc_interpolate(V, v).coefficients, v.coefficients, atol=1e-13)


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_inc_of_a_prolonged_function_is_itself(seed):
    pair = MeshPair.from_refinement(l_shape(1), [seed % 12, (seed // 12) % 12])
    V = FeSpace(pair.coarse, "CR_free")
    v = _random(V, seed)
    back = inc_interpolate(V, prolong(v, pair))
    np.testing.assert_allclose(back.coefficients, v.coefficients, atol=1e-13)


def test_inc_preserves_side_means_of_callables():
    V = FeSpace(unit_square(2), "CR_free")
    f = lambda x: 2 * x[:, 0] - x[:, 1] + 0.3
    np.testing.assert_allclose(inc_interpolate(V, f).coefficients,
                               f(V.mesh.side_midpoints), atol=1e-14)
    # x^2 has side mean a^2 + a b + b^2 over 3 on a side from a to b
    g = inc_interpolate(V, lambda x: x[:, 0] ** 2)
    P = V.mesh.coordinates[V.mesh.sides][:, :, 0]
    exact = (P[:, 0] ** 2 + P[:, 0] * P[:, 1] + P[:, 1] ** 2) / 3
    np.testing.assert_allclose(g.coefficients, exact, atol=1e-14)


@pytest.mark.parametrize("kind", ["J1", "angle_weighted", "node_max", "node_min"])
@given(seed=seeds)
@settings(max_examples=15, deadline=None)
def test_enrichers_respect_the_convex_hull(kind, seed):
    mesh = unit_square(2)
    v = _random(FeSpace(mesh, "CR_zero"), seed)
    w = enrich(kind, v)
    assert w.kind == "S1_zero"
    assert convex_hull_violation(v, w) <= 1e-13


@pytest.mark.parametrize("kind", ["J1", "angle_weighted", "node_max", "node_min"])
def test_enrichers_fix_conforming_functions(kind):
    mesh = l_shape(1)
    s = _random(FeSpace(mesh, "S1_zero"), 3)
    cr = inc_interpolate(FeSpace(mesh, "CR_zero"), s)
    np.testing.assert_allclose(enrich(kind, cr).coefficients, s.coefficients, atol=1e-13)


def test_quasi_jqi_checks_consistency():
    mesh = unit_square(2)
    V = FeSpace(mesh, "CR_zero")
    v = _random(V, 0)
    with pytest.raises(PreconditionError):
        enrich("quasi_JQI", v, overlap=range(mesh.n_elements))
    s = _random(FeSpace(mesh, "S1_zero"), 1)
    cr = inc_interpolate(V, s)
    w = enrich("quasi_JQI", cr, overlap=range(mesh.n_elements))
    np.testing.assert_allclose(w.coefficients, s.coefficients, atol=1e-13)
    jqi_consistency(mesh, cr.broken_values, range(mesh.n_elements))


def test_enrichment_kind_validation():
    with pytest.raises(InputError):
        EnrichmentKind("bogus")
    with pytest.raises(InputError):
        EnrichmentKind("quasi_JQI")
    assert not EnrichmentKind("node_max").linear
    assert set(ENRICHERS) >= {"J1", "quasi_JQI"}


@given(seeds)
@settings(max_examples=15, deadline=None)
def test_quasi_interpolation_is_a_projection(seed):
    pair = MeshPair.from_refinement(unit_square(2), [seed % 16])
    s = _random(FeSpace(pair.coarse, "S1_zero"), seed)
    w = quasi_interpolate("J1", pair.coarse, prolong(s, pair))
    np.testing.assert_allclose(w.coefficients, s.coefficients, atol=1e-13)


@given(seeds)
@settings(max_examples=15, deadline=None)
def test_dqi_keeps_overlap_values_and_matches_composition(seed):
    pair = MeshPair.from_refinement(unit_square(2), [seed % 16, 5])
    u = _random(FeSpace(pair.fine, "S1_zero"), seed)
    d = discrete_quasi_interpolate(pair, u)
    nodes = _overlap_nodes(pair)
    np.testing.assert_array_equal(d.vertex_values()[nodes], u.vertex_values()[nodes])
    cr = inc_interpolate(FeSpace(pair.coarse, "CR_zero"), u)
    composed = enrich("quasi_JQI", cr, overlap=list(pair.overlap))
    np.testing.assert_allclose(d.coefficients, composed.coefficients, atol=1e-12)


def test_transformers(pair):
    coarse = pair.coarse
    V = FeSpace(coarse, "CR_zero")
    X = np.random.default_rng(0).standard_normal((4, V.n_dofs))
    enr = Enricher().fit(coarse)
    out = enr.transform(X)
    assert out.shape == (4, FeSpace(coarse, "S1_zero").n_dofs)
    np.testing.assert_allclose(out[1], enrich("J1", FeFunction(V, X[1])).coefficients)
    assert clone(enr).get_params() == enr.get_params()
    with pytest.raises(InputError):
        enr.transform(X[:, :-1])
    with pytest.raises(InputError):
        enr.transform(FeSpace(pair.fine, "CR_zero").zero())

    u = _random(FeSpace(pair.fine, "S1_zero"), 2)
    dq = DiscreteQuasiInterpolator().fit(pair)
    np.testing.assert_allclose(dq.transform(u).coefficients,
                               discrete_quasi_interpolate(pair, u).coefficients)
    with pytest.raises(InputError):
        DiscreteQuasiInterpolator().fit(coarse)

    qi = QuasiInterpolator().fit(coarse)
    np.testing.assert_allclose(qi.transform(u).coefficients,
                               quasi_interpolate("J1", coarse, u).coefficients)
    nc = NonconformingInterpolator().fit(coarse)
    assert nc.transform(u).space.kind == "CR_free"
