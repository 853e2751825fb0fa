import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vagflow.mesh import (
    Mesh,
    MeshError,
    MeshParseError,
    basis_integrals,
    build_submesh,
    compute_lumping,
    generate_structured,
    mesh_quality,
    parse_mesh,
    read_mesh,
    serialize_mesh,
    write_mesh,
)

SQUARE = """VAGMESH 2
# one square cell
VERTICES 4
0 0
1 0
1 1
0 1
CELLS 1
4 1 2 3 4
"""


def test_parse_single_square():
    mesh = parse_mesh(SQUARE)
    assert mesh.n_vertices == 4 and mesh.n_cells == 1 and mesh.n_dofs == 5
    assert mesh.cells == ((0, 1, 2, 3),)
    np.testing.assert_allclose(mesh.centers[0], [0.5, 0.5])
    assert mesh.tags.tolist() == [1]
    assert mesh.area == pytest.approx(1.0, rel=1e-15)
    assert sorted(mesh.boundary_vertices.tolist()) == [0, 1, 2, 3]


def test_explicit_center_and_tag():
    text = SQUARE.replace("4 1 2 3 4", "4 1 2 3 4 7") + "CENTERS 1\n0.25 0.5\n"
    mesh = parse_mesh(text)
    np.testing.assert_array_equal(mesh.centers[0], [0.25, 0.5])
    assert mesh.tags.tolist() == [7]


@pytest.mark.parametrize(
    "text, line, column",
    [
        ("VAGMESH 3\n", 1, 1),
        (SQUARE.replace("4 1 2 3 4", "4 1 2 3 9"), 9, 9),
        (SQUARE.replace("1 1\n", "1 x\n"), 6, 3),
        (SQUARE.replace("CELLS 1", "CELLZ 1"), 8, 1),
        (SQUARE + "junk\n", 10, 1),
    ],
)
def test_parse_errors_carry_position(text, line, column):
    with pytest.raises(MeshParseError) as info:
        parse_mesh(text)
    assert (info.value.line, info.value.column) == (line, column)


def test_center_outside_cell_rejected():
    verts = [[0, 0], [1, 0], [1, 1], [0, 1]]
    with pytest.raises(MeshError) as info:
        Mesh.from_arrays(verts, [[0, 1, 2, 3]], centers=[[1.5, 0.5]])
    assert info.value.cell == 0


def test_clockwise_cell_rejected():
    with pytest.raises(MeshError):
        Mesh.from_arrays([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 3, 2, 1]])


def test_overlapping_cells_rejected():
    verts = [[0, 0], [1, 0], [1, 1], [0, 1]]
    with pytest.raises(MeshError):
        Mesh.from_arrays(verts, [[0, 1, 2, 3], [0, 1, 2, 3]])


@pytest.mark.parametrize("kind, n, d", [("cartesian", 3, 0), ("split-triangles", 4, 0), ("kershaw-like", 5, 0.6)])
def test_round_trip_bit_identical(kind, n, d, tmp_path):
    mesh = generate_structured(kind, n, d)
    text = serialize_mesh(mesh)
    again = parse_mesh(text)
    assert serialize_mesh(again) == text
    np.testing.assert_array_equal(again.vertices, mesh.vertices)
    np.testing.assert_array_equal(again.centers, mesh.centers)
    write_mesh(mesh, tmp_path / "m.vagmesh")
    assert serialize_mesh(read_mesh(tmp_path / "m.vagmesh")) == text


@settings(max_examples=25, deadline=None)
@given(
    kind=st.sampled_from(["cartesian", "split-triangles", "kershaw-like"]),
    n=st.integers(1, 9),
    d=st.floats(0.0, 0.8),
    f=st.floats(0.01, 0.9),
)
def test_partitions(kind, n, d, f):
    mesh = generate_structured(kind, n, d)
    sub = build_submesh(mesh)
    assert sub.area.sum() == pytest.approx(mesh.cell_areas.sum(), rel=1e-12)
    assert mesh.cell_areas.sum() == pytest.approx(1.0, rel=1e-12)
    lumped = compute_lumping(mesh, f)
    masses = lumped.dof_masses()
    assert np.all(masses > 0)
    assert masses.sum() == pytest.approx(1.0, rel=1e-12)
    q = mesh_quality(mesh, sub, lumped)
    assert q.theta >= 2.0 and q.ell >= 3 and 0 < q.zeta <= 2.0


def test_single_square_lumping(unit_square):
    lumped = compute_lumping(unit_square, 0.1)
    np.testing.assert_allclose(lumped.alpha, 0.025)
    np.testing.assert_allclose(lumped.m_vertex, 0.025)
    assert lumped.m_cell[0] == pytest.approx(0.9)


def test_single_square_basis_integrals_and_quality(unit_square):
    sub = build_submesh(unit_square)
    # each vertex touches two triangles of area 1/4; the center touches four
    np.testing.assert_allclose(basis_integrals(unit_square, sub), [1 / 6] * 4 + [1 / 3])
    q = mesh_quality(unit_square, sub, compute_lumping(unit_square, 0.1))
    assert q.zeta == pytest.approx(0.15)
    assert q.ell == 4
    # right isosceles triangle with legs sqrt(2)/2: diameter / incircle diameter = 1 + sqrt(2)
    assert q.theta == pytest.approx(1 + math.sqrt(2))
    assert q.h == pytest.approx(1.0)


def test_explicit_weights(unit_square):
    lumped = compute_lumping(unit_square, weights={(0, s): 0.2 for s in range(4)})
    assert lumped.m_cell[0] == pytest.approx(0.2)
    with pytest.raises(ValueError):
        compute_lumping(unit_square, weights=[0.3, 0.3, 0.3, 0.3])


@pytest.mark.parametrize("kind", ["cartesian", "split-triangles"])
def test_quality_refinement_invariance(kind):
    qs = []
    for n in (2, 4, 8):
        mesh = generate_structured(kind, n)
        sub = build_submesh(mesh)
        qs.append(mesh_quality(mesh, sub, compute_lumping(mesh, 0.1)))
    for q in qs[1:]:
        assert q.theta == pytest.approx(qs[0].theta, rel=1e-12)
        assert q.zeta == pytest.approx(qs[0].zeta, rel=1e-12)
        assert q.ell == qs[0].ell


def test_kershaw_distortion_degrades_theta():
    def theta(d):
        mesh = generate_structured("kershaw-like", 12, d)
        return mesh_quality(mesh, build_submesh(mesh), compute_lumping(mesh, 0.1)).theta

    assert theta(0.6) > theta(0.0)


def test_boundary_sides():
    mesh = generate_structured("cartesian", 3)
    assert len(mesh.boundary_side("bottom")) == 4
    assert len(mesh.boundary_side("all")) == 12
    assert np.all(mesh.vertices[mesh.boundary_side("top"), 1] == 1.0)


def test_generator_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_structured("hexagons", 3)
    with pytest.raises(ValueError):
        generate_structured("kershaw-like", 3, 1.0)
