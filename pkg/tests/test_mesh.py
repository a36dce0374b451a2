import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from micromorph2d.mesh import (DIRICHLET_U, InvalidMesh, Mesh, MeshGenerationFailure, ParseError,
                               clough_tocher, disc_two_material, read_mesh, split_triangle, square_mesh,
                               write_mesh)


@pytest.mark.parametrize("n,cells,verts,edges", [(1, 2, 4, 5), (4, 32, 25, 56), (16, 512, 289, 800)])
def test_square_counts(n, cells, verts, edges):
    m = square_mesh(2 * np.pi, n)
    assert (m.n_cells, m.n_vertices, m.n_edges) == (cells, verts, edges)
    assert (n + 1) ** 2 == verts and 3 * n * n + 2 * n == edges
    m.validate()
    assert len(m.boundary_tags) == 4 * n
    assert set(m.boundary_tags.values()) == {DIRICHLET_U}


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 12), st.floats(0.1, 10))
def test_square_mesh_invariants(n, a):
    m = square_mesh(a, n)
    assert np.all(m.signed_areas() > 0)
    assert m.n_vertices - m.n_edges + m.n_cells == 1
    counts = np.bincount(m.cell_edges.ravel(), minlength=m.n_edges)
    assert set(np.unique(counts)) <= {1, 2}
    assert (counts == 1).sum() == len(m.boundary_edges()) == 4 * n
    assert np.all(m.edges[:, 0] < m.edges[:, 1])
    assert m.signed_areas().sum() == pytest.approx(4 * a * a, rel=1e-12)


def test_edge_signs_agree_between_neighbours():
    m = square_mesh(1.0, 5)
    from micromorph2d.mesh import LOCAL_EDGES
    for c in range(m.n_cells):
        for k, (a, b) in enumerate(LOCAL_EDGES):
            va, vb = m.cells[c, a], m.cells[c, b]
            e = m.cell_edges[c, k]
            assert tuple(m.edges[e]) == (min(va, vb), max(va, vb))
            assert m.cell_edge_signs[c, k] == (1 if va < vb else -1)


@pytest.mark.parametrize("target,tol", [(54, 0.02), (168, 0.02), (602, 0.001), (2636, 0.001)])
def test_disc_tiers(target, tol):
    m = disc_two_material(5.0, 10.0, target)
    m.validate()
    assert abs(m.n_cells - target) <= 0.3 * target
    assert m.region_area(1) == pytest.approx(np.pi * 25, rel=tol)
    assert m.region_area(0) + m.region_area(1) == pytest.approx(np.pi * 100, rel=tol)
    assert m.holes() == 0
    # interface edges separate the two regions and lie on the circle of radius 5
    ie = m.interface_edges()
    assert len(ie) > 0
    r = np.linalg.norm(m.vertices[m.edges[ie]], axis=-1)
    assert np.allclose(r, r[0, 0], rtol=1e-12)
    assert r[0, 0] == pytest.approx(5.0, rel=0.15)  # area-preserving polygon radius


def test_disc_is_deterministic():
    a, b = disc_two_material(5, 10, 168), disc_two_material(5, 10, 168)
    assert a.same_as(b)


def test_disc_rejects_bad_input():
    with pytest.raises(ValueError):
        disc_two_material(10, 5, 100)
    with pytest.raises(ValueError):
        disc_two_material(5, 10, 3)


def test_mesh_generation_failure_is_a_runtime_error():
    assert issubclass(MeshGenerationFailure, RuntimeError)


def test_validate_rejects_clockwise_cell():
    m = Mesh.from_arrays(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 2, 1]]))
    with pytest.raises(InvalidMesh):
        m.validate()


def test_clough_tocher_examples():
    s = split_triangle(np.array([[0, 0], [1, 0], [0, 1.0]]))
    assert np.allclose(s.barycenter, [1 / 3, 1 / 3])
    assert np.allclose(s.subcell_areas(), 1 / 6)
    eq = split_triangle(np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]]))
    assert np.allclose(eq.subcell_areas(), eq.subcell_areas()[0])
    for i, (a, b) in enumerate(s.internal_edges):
        assert a == i and b == 3


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1))
def test_clough_tocher_area_sum(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, size=(3, 2))
    d1, d2 = x[1] - x[0], x[2] - x[0]
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    if abs(area) < 1e-3:
        return
    x = x * np.sqrt(2.7 / abs(area))
    if area < 0:
        x = x[[0, 2, 1]]
    s = split_triangle(x)
    assert s.subcell_areas().sum() == pytest.approx(2.7, abs=1e-12)
    assert np.all(s.subcell_areas() > 0)


def test_clough_tocher_on_mesh_cell():
    m = square_mesh(1.0, 2)
    s = clough_tocher(m, 3)
    assert s.parent == 3
    assert s.subcell_areas().sum() == pytest.approx(m.signed_areas()[3])


@pytest.mark.parametrize("make", [lambda: square_mesh(2 * np.pi, 4), lambda: disc_two_material(5, 10, 168)])
def test_round_trip(tmp_path, make):
    m = make()
    write_mesh(m, tmp_path / "m.txt")
    back = read_mesh(tmp_path / "m.txt")
    assert back.same_as(m)
    assert np.array_equal(back.vertices, m.vertices)
    assert back.boundary_tags == m.boundary_tags


def test_duplicate_cell_is_a_parse_error(tmp_path):
    m = square_mesh(1.0, 1)
    write_mesh(m, tmp_path / "m.txt")
    lines = (tmp_path / "m.txt").read_text().splitlines()
    i = lines.index("cells 2")
    lines[i] = "cells 3"
    lines.insert(i + 2, lines[i + 1])
    (tmp_path / "bad.txt").write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as err:
        read_mesh(tmp_path / "bad.txt")
    assert err.value.line == i + 3


def test_parse_errors_carry_position(tmp_path):
    (tmp_path / "a.txt").write_text("micromorph2d-mesh 1\nvertices 1\n0.0 abc\n")
    with pytest.raises(ParseError) as err:
        read_mesh(tmp_path / "a.txt")
    assert (err.value.line, err.value.col) == (3, 5)
    (tmp_path / "b.txt").write_text("not a mesh\n")
    with pytest.raises(ParseError):
        read_mesh(tmp_path / "b.txt")
