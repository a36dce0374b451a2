import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from micromorph2d.macroelement import (MACRO_DIM, N_CONSTRAINTS, RAW_DIM, UnisolvenceFailure,
                                       build_macro_basis, condition_survey, macro_kernel_check,
                                       random_triangle)
from micromorph2d.mesh import DegenerateCell

UNIT = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def test_dimension_bookkeeping():
    assert RAW_DIM - N_CONSTRAINTS == MACRO_DIM == 4 * 3 + 3
    b = build_macro_basis(UNIT)
    assert b.constraints.shape == (N_CONSTRAINTS, RAW_DIM)
    assert b.nullspace.shape == (RAW_DIM, MACRO_DIM)
    assert b.dof_matrix.shape == (MACRO_DIM, RAW_DIM)
    assert b.constraint_rank == N_CONSTRAINTS
    G = b.dof_matrix @ b.nullspace
    assert np.linalg.matrix_rank(G) == MACRO_DIM


def test_unit_triangle_report():
    rep = macro_kernel_check(build_macro_basis(UNIT))
    assert rep.ok(), rep


def test_duality_and_zero_field():
    b = build_macro_basis(UNIT)
    x = np.array([[0.2, 0.1], [0.5, 0.3]])
    for k in range(MACRO_DIM):
        e = np.zeros(MACRO_DIM)
        e[k] = 1
        assert np.allclose(b.functionals(b.raw_coefficients(e)), e, atol=1e-12)
    for sub in range(3):
        assert np.all(b.evaluate(sub, x, np.zeros(MACRO_DIM)) == 0)


def test_fields_are_trace_free_and_jump_free():
    b = build_macro_basis(UNIT)
    assert np.abs(b.constraints @ b.coefficients).max() < 1e-12 * np.abs(b.coefficients).max()
    d = np.random.default_rng(0).standard_normal(MACRO_DIM)
    for sub in range(3):
        pts = b.split.subcell_vertices(sub).mean(axis=0, keepdims=True)
        Y = b.evaluate(sub, pts, d)
        assert abs(Y[0, 0, 0] + Y[0, 1, 1]) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_triangles_unisolvent(seed):
    tri = random_triangle(np.random.default_rng(seed))
    rep = macro_kernel_check(build_macro_basis(tri), samples=2, seed=seed)
    assert rep.ok(), rep


def test_condition_survey():
    rows = condition_survey(100, seed=0)
    assert len(rows) == 100
    assert all(r["ok"] for r in rows)
    assert max(r["condition"] for r in rows) < 1e8


def test_needle_is_reported():
    needle = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1e-6]])
    with pytest.raises(UnisolvenceFailure) as err:
        build_macro_basis(needle)
    assert err.value.condition > 1e12


def test_collinear_is_degenerate():
    with pytest.raises(DegenerateCell):
        build_macro_basis(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
