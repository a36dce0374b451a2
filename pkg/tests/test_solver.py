import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from micromorph2d.experiments import convergence_problem, scaled_region
from micromorph2d.fields import sine_field
from micromorph2d.mesh import Mesh, square_mesh
from micromorph2d.solver import (RESIDUAL_TOL, STRATEGIES, SingularSystem, factorize, inertia,
                                 relative_residual, solve, solve_sparse)
from micromorph2d.system import ProblemSpec, apply_dirichlet, assemble, build_spaces


def test_spd_example():
    A = sp.csc_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    x = solve_sparse(A, np.array([1.0, 2.0]))
    assert np.allclose(x, [1 / 11, 7 / 11], atol=1e-15)
    assert inertia(A) == (2, 0, 0)


def test_saddle_point_inertia():
    A = sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 0.0]]))
    assert inertia(A) == (1, 1, 0)
    assert factorize(A).inertia == (1, 1, 0)
    assert np.allclose(solve_sparse(A, np.array([2.0, 1.0])), [1.0, 1.0])


def test_zero_rhs_gives_zero():
    A = sp.identity(4, format="csc")
    assert np.array_equal(solve_sparse(A, np.zeros(4)), np.zeros(4))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 40), st.sampled_from(STRATEGIES))
def test_factorization_inverts_on_probes(seed, n, strategy):
    rng = np.random.default_rng(seed)
    B = sp.random(n, n, density=0.3, random_state=rng) + sp.identity(n)
    A = (B @ B.T + sp.identity(n)).tocsc()
    # a symmetric indefinite border
    K = sp.bmat([[A, sp.csc_matrix(rng.standard_normal((n, 1)))],
                 [sp.csc_matrix(rng.standard_normal((1, n))), None]]).tocsc()
    K = ((K + K.T) * 0.5).tolil()
    K[n, n] = 0.0
    K = K.tocsc()
    fac = factorize(K, strategy=strategy)
    for _ in range(3):
        b = rng.standard_normal(n + 1)
        assert np.linalg.norm(K @ fac.solve(b) - b) <= 1e-8 * np.linalg.norm(b) * (1 + abs(K).max())


def test_singular_matrix_raises():
    A = sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularSystem):
        solve_sparse(A, np.array([1.0, 0.0]))


def test_floating_body_names_a_mesh_entity():
    mesh = Mesh.from_arrays(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                            default_tag=None)
    spec = ProblemSpec("PrimalSplit", {0: scaled_region(10.0, 1.0)}, None, "NeumannFree",
                       body_force=lambda x: np.ones(x.shape))
    system = apply_dirichlet(assemble(spec, build_spaces(mesh, spec)), spec)
    with pytest.raises(SingularSystem) as err:
        solve(system, spec=spec)
    assert err.value.dof is not None
    assert err.value.polytope and "cell" in err.value.polytope


def test_primal_split_is_positive_definite():
    mesh = square_mesh(2 * np.pi, 2)
    spec = ProblemSpec("PrimalSplit", {0: scaled_region(10.0, 1.0)}, sine_field(), "ZeroTangentialD")
    system = apply_dirichlet(assemble(spec, build_spaces(mesh, spec)), spec)
    pos, neg, zero = factorize(system.matrix).inertia
    assert neg == 0 and zero == 0 and pos == system.matrix.shape[0]


def test_mixed_inertia_counts_multipliers():
    mesh = square_mesh(2 * np.pi, 2)
    spec = convergence_problem("MixedSplit")
    spaces = build_spaces(mesh, spec)
    system = apply_dirichlet(assemble(spec, spaces), spec)
    pos, neg, zero = factorize(system.matrix).inertia
    assert zero == 0
    # the mean multipliers border the negative definite h block, so they count as positive
    assert len(spaces.extras) == 2
    assert neg == spaces.fields["h"].ndofs


def test_residual_recorded_and_small():
    mesh = square_mesh(2 * np.pi, 4)
    spec = convergence_problem("MixedSplit")
    system = apply_dirichlet(assemble(spec, build_spaces(mesh, spec)), spec)
    sol = solve(system, spec=spec)
    assert sol.residual <= RESIDUAL_TOL
    assert relative_residual(system.matrix, sol.coefficients, system.rhs) == pytest.approx(sol.residual)
