import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fembounds.errors import GeometryError, InputError, NonconformingMeshError
from fembounds.mesh import (MeshPair, TaggedSimplex, Triangulation, bisect, diameter_study,
                            l_shape, load_mesh, make_preset, mesh_metrics, red_refine,
                            reference_tetrahedron, refine_conforming, refine_uniform,
                            save_mesh, simplex_volume, single_simplex, unit_square)

coord = st.floats(-1, 1, allow_nan=False)


def triangles():
    return st.lists(st.tuples(coord, coord), min_size=3, max_size=3).map(np.array).filter(
        lambda P: abs(np.linalg.det(P[1:] - P[0])) > 1e-2)


def test_tagged_simplex_refinement_edge():
    assert TaggedSimplex((4, 7, 9)).refinement_edge == (4, 9)
    assert TaggedSimplex((0, 1, 2, 3), type_tag=2).refinement_edge == (0, 3)
    with pytest.raises(InputError):
        TaggedSimplex((0, 1, 2), type_tag=1)


def test_bisect_children_share_midpoint():
    coords = np.array([[0.0, 0], [1, 0], [0, 1]])
    c1, c2, mid = bisect(TaggedSimplex((0, 1, 2)), coords)
    np.testing.assert_allclose(mid, [0, 0.5])
    assert 3 in c1.vertices and 3 in c2.vertices
    assert c1.level == c2.level == 1


@given(triangles())
@settings(max_examples=40, deadline=None)
def test_bisection_preserves_area_and_conformity(P):
    mesh = refine_uniform(single_simplex(P), 2)
    assert mesh.is_conforming()
    assert np.isclose(mesh.volumes.sum(), simplex_volume(P))
    assert np.allclose(mesh.volumes, mesh.volumes[0])


@given(triangles())
@settings(max_examples=50, deadline=None)
def test_three_rounds_halve_the_diameter(P):
    assert diameter_study(P, 0, 3)[2] <= 0.5 + 1e-12


def test_tetrahedron_needs_seven_rounds():
    T = reference_tetrahedron()
    assert all(diameter_study(T, t, 7)[6] <= 0.5 + 1e-12 for t in range(3))
    assert any(diameter_study(T, t, 6)[5] > 0.5 for t in range(3))


def test_red_refinement_tiles_the_triangle():
    P = np.array([[0.0, 0], [2, 0], [0.5, 1]])
    kids = red_refine(P)
    assert len(kids) == 4
    assert np.isclose(sum(simplex_volume(k) for k in kids), simplex_volume(P))
    with pytest.raises(InputError):
        red_refine(np.zeros((4, 3)))


@given(st.lists(st.integers(0, 11), min_size=1, max_size=4), st.integers(0, 3))
@settings(max_examples=30, deadline=None)
def test_closure_keeps_the_mesh_conforming(marked, rounds):
    mesh = l_shape(1)
    for _ in range(rounds + 1):
        pair = MeshPair.from_refinement(mesh, [m % mesh.n_elements for m in marked])
        pair.check()
        mesh = pair.fine
        assert mesh.is_conforming()
        assert mesh.euler_characteristic() == 1
    assert np.isclose(mesh.volumes.sum(), 3.0)


def test_mesh_pair_overlap_and_compose():
    sq = unit_square(2)
    p1 = MeshPair.from_refinement(sq, [0])
    assert 0 in p1.refined and 0 not in p1.overlap
    for c, f in p1.overlap.items():
        assert np.array_equal(sq.elements[c], p1.fine.elements[f])
    p2 = MeshPair.from_refinement(p1.fine, [0])
    p = p1.compose(p2).check()
    assert p.fine is p2.fine
    with pytest.raises(InputError):
        p2.compose(p1)
    ident = MeshPair.identity(sq)
    assert len(ident.refined) == 0


def test_side_connectivity_unit_square():
    mesh = unit_square(1)
    assert mesh.n_vertices == 5 and mesh.n_elements == 4 and mesh.n_sides == 8
    assert mesh.boundary_sides.sum() == 4
    assert mesh.dirichlet_vertices.sum() == 4
    assert np.isclose(mesh.side_measures[mesh.boundary_sides].sum(), 4.0)


def test_metrics_of_presets():
    m = mesh_metrics(unit_square(2))
    assert np.isclose(m.omega0, np.pi / 4)
    assert (m.m_int, m.m_bd) == (8, 4)
    assert mesh_metrics(l_shape(1)).h_max == pytest.approx(1.0)


def test_invalid_meshes_are_rejected():
    with pytest.raises(GeometryError):
        single_simplex([[0, 0], [1, 1], [2, 2]])
    coords = np.array([[0.0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]])
    # vertex 4 hangs on the diagonal side of the last triangle
    with pytest.raises(NonconformingMeshError):
        Triangulation(coords, [[0, 1, 4], [1, 2, 4], [0, 2, 3]])
    with pytest.raises(InputError):
        make_preset("no-such-mesh")


def test_round_trip(tmp_path):
    mesh = refine_conforming(l_shape(1), [3, 7])
    path = tmp_path / "mesh.json"
    save_mesh(mesh, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.elements, mesh.elements)
    np.testing.assert_allclose(back.coordinates, mesh.coordinates)
    np.testing.assert_array_equal(back.types, mesh.types)
