import numpy as np
import pytest
import scipy.sparse as sp
from polyfields import fd_gradient

from micromorph2d.experiments import convergence_problem, scaled_region
from micromorph2d.fields import linear_field, sine_field, zero_field
from micromorph2d.mesh import Mesh, disc_two_material, square_mesh
from micromorph2d.quadrature import triangle_rule
from micromorph2d.solver import solve
from micromorph2d.spaces import build_space, dof_count_formula
from micromorph2d.system import (FormulationSpaceMismatch, MissingMaterial, ProblemSpec, SolutionBundle,
                                 apply_dirichlet, assemble, build_spaces, dirichlet_values, energy,
                                 error_norms, evaluate_fields, field_norms, manufactured_loads,
                                 weak_trace_residual)
from micromorph2d.tensorops import IsotropicLaw, MaterialRegion, apply_isotropic, spherical_microdistortion, sym

SQ = 2 * np.pi


def _solve(spec, mesh, check=True):
    spaces = build_spaces(mesh, spec)
    return solve(apply_dirichlet(assemble(spec, spaces), spec), check=check, spec=spec)


# --- dof bookkeeping -------------------------------------------------------------

@pytest.mark.parametrize("n,primal,mixed", [(4, 1485, 1871), (8, 5685, 7223)])
def test_dof_totals(n, primal, mixed):
    mesh = square_mesh(SQ, n)
    for form, total in (("PrimalSplit", primal), ("MixedSplit", mixed)):
        spec = convergence_problem(form)
        assert build_spaces(mesh, spec).ndofs == total


def test_dof_breakdown_coarse_square():
    mesh = square_mesh(SQ, 4)
    spaces = build_spaces(mesh, convergence_problem("PrimalSplit"))
    assert [spaces.fields[k].ndofs for k in ("u", "D", "I")] == [578, 587, 320]


@pytest.mark.parametrize("family,p", [("LagrangeCG", 4), ("LagrangeDG", 2), ("DeviatoricY", 1),
                                      ("DeviatoricY", 3), ("DeviatoricY", 4), ("NedelecII", 3)])
def test_dof_formula(family, p):
    for mesh in (square_mesh(1.0, 3), disc_two_material(5, 10, 54)):
        assert build_space(mesh, family, p).ndofs == dof_count_formula(mesh, family, p)


@pytest.mark.parametrize("family,p", [("LagrangeCG", 4), ("DeviatoricY", 3), ("NedelecII", 3)])
def test_shared_edge_dofs_match(family, p):
    mesh = disc_two_material(5, 10, 54)
    space = build_space(mesh, family, p)
    per_cell = space.local_size
    for e in range(mesh.n_edges):
        c0, c1 = mesh.edge_cells[e]
        if c1 < 0:
            continue
        shared = set(space.cell_dofs[c0]) & set(space.cell_dofs[c1])
        # both cells reference the same dofs for this edge and its vertices
        expected = {"LagrangeCG": 2 + (p - 1), "DeviatoricY": 6 + 2 * (p - 1), "NedelecII": 2 * (p + 1)}
        assert len(shared) == expected[family], (e, len(shared))
        assert per_cell == space.cell_dofs.shape[1]


# --- assembly ------------------------------------------------------------------------

def _one_cell():
    verts = np.array([[0.1, -0.2], [1.3, 0.1], [0.4, 0.9]])
    return Mesh.from_arrays(verts, np.array([[0, 1, 2]]), default_tag=None)


def test_curl_curl_block_on_one_cell():
    mesh = _one_cell()
    zero = IsotropicLaw(0.0, 0.0)
    spec = ProblemSpec("PrimalSplit", {0: MaterialRegion(zero, zero, 0.0, 1.0, 1.0)}, None, "NeumannFree")
    spaces = build_spaces(mesh, spec)
    A = assemble(spec, spaces).matrix.toarray()
    blk = A[spaces.block("D"), spaces.block("D")]
    rule = triangle_rule(10)
    J = mesh.jacobians()
    _, curls = spaces.fields["D"].element.physical(J, rule.xi)
    w = rule.weights * abs(np.linalg.det(J[0]))
    local = np.einsum("aqi,bqi,q->ab", curls[0], curls[0], w)
    D = spaces.fields["D"]
    S = D.cell_signs[0][:, None] * D.cell_signs[0][None, :] * local
    gram = np.zeros_like(blk)
    np.add.at(gram, (D.cell_dofs[0][:, None], D.cell_dofs[0][None, :]), S)
    assert np.abs(blk - gram).max() <= 1e-12 * np.abs(gram).max()


@pytest.mark.parametrize("form", ["PrimalSplit", "MixedSplit", "FullCurl", "WeakDeviatoric"])
def test_assembled_matrix_symmetric(form):
    mesh = square_mesh(1.0, 2)
    spec = ProblemSpec(form, {0: scaled_region(10.0, 1.0, 2.0)}, sine_field(), "ZeroTangentialD")
    A = assemble(spec, build_spaces(mesh, spec)).matrix
    asym = abs(A - A.T).max()
    assert asym <= 1e-12 * abs(A).max()


def test_primal_spectrum_nonnegative():
    mesh = square_mesh(SQ, 2)
    spec = ProblemSpec("PrimalSplit", {0: scaled_region(10.0)}, sine_field(), "ZeroTangentialD")
    system = apply_dirichlet(assemble(spec, build_spaces(mesh, spec)), spec)
    ev = np.linalg.eigvalsh(system.matrix.toarray())
    assert ev.min() > -1e-10 * ev.max()


@pytest.mark.parametrize("lc", [0.1, 1.0, 10.0])
def test_mixed_schur_complement_reproduces_primal_cell(lc):
    mesh = _one_cell()
    region = scaled_region(10.0, 1.0, lc)
    primal = ProblemSpec("PrimalSplit", {0: region}, None, "NeumannFree")
    mixed = ProblemSpec("MixedSplit", {0: region}, None, "NeumannFree")
    sp_p, sp_m = build_spaces(mesh, primal), build_spaces(mesh, mixed)
    Ap = assemble(primal, sp_p).matrix.toarray()
    Am = assemble(mixed, sp_m).matrix.toarray()
    h = sp_m.block("h")
    keep = np.r_[0:h.start]
    A, B, M = Am[np.ix_(keep, keep)], Am[keep, h], Am[h, h]
    schur = A - B @ np.linalg.solve(M, B.T)
    assert np.abs(schur - Ap).max() <= 1e-10 * np.abs(Ap).max()


def test_mixed_needs_curvature():
    mesh = _one_cell()
    spec = ProblemSpec("MixedSplit", {0: scaled_region(10.0, 1.0, 0.0)}, None, "NeumannFree")
    with pytest.raises(FormulationSpaceMismatch):
        assemble(spec, build_spaces(mesh, spec))


def test_missing_material():
    mesh = disc_two_material(5, 10, 54)
    spec = ProblemSpec("PrimalSplit", {0: scaled_region(10.0)}, None, "NeumannFree")
    with pytest.raises(MissingMaterial):
        assemble(spec, build_spaces(mesh, spec))


def test_bad_spec_values():
    with pytest.raises(ValueError):
        ProblemSpec("Nope", {})
    with pytest.raises(ValueError):
        ProblemSpec("PrimalSplit", {}, coupling="Nope")


# --- Dirichlet data ------------------------------------------------------------------------

def test_displacement_boundary_values():
    mesh = square_mesh(1.0, 3)
    for field, check in ((linear_field(0.1 * np.eye(2)), lambda X: 0.1 * X), (zero_field(), lambda X: 0 * X)):
        spec = ProblemSpec("PrimalSplit", {0: scaled_region(10.0)}, field, "NeumannFree")
        sol = _solve(spec, mesh)
        ev = evaluate_fields(sol, np.arange(mesh.n_cells), np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.0]]))
        X = ev["_x"]
        on_bnd = np.isclose(np.abs(X).max(axis=-1), 1.0)
        assert np.allclose(ev["u"][on_bnd], check(X[on_bnd]), atol=1e-12)


@pytest.mark.parametrize("form", ["PrimalSplit", "FullCurl"])
def test_consistent_coupling_matches_tangential_trace(form):
    G = np.array([[0.2, 0.1], [0.0, -0.2]])  # trace free, so the deviatoric trace can match it
    mesh = square_mesh(1.0, 2)
    spec = ProblemSpec(form, {0: scaled_region(10.0, 1.0)}, linear_field(G), "ConsistentCoupling")
    sol = _solve(spec, mesh)
    s = np.linspace(0.1, 0.9, 5)
    for e in mesh.boundary_edges():
        a, b = mesh.edges[e]
        c = mesh.edge_cells[e, 0]
        local = list(mesh.cells[c])
        from micromorph2d.elements import REF_VERTICES
        xi = (1 - s)[:, None] * REF_VERTICES[local.index(a)] + s[:, None] * REF_VERTICES[local.index(b)]
        ev = evaluate_fields(sol, np.array([c]), xi)
        t = mesh.vertices[b] - mesh.vertices[a]
        assert np.allclose(ev[sol.spaces.micro_name][0] @ t, G @ t, atol=1e-12)


def test_zero_tangential_fixes_all_boundary_micro_dofs():
    mesh = square_mesh(1.0, 2)
    spec = ProblemSpec("PrimalSplit", {0: scaled_region(10.0)}, sine_field(), "ZeroTangentialD")
    spaces = build_spaces(mesh, spec)
    fixed, values = dirichlet_values(spec, spaces)
    dfix = fixed[(fixed >= spaces.offsets["D"]) & (fixed < spaces.offsets["D"] + spaces.fields["D"].ndofs)]
    assert len(dfix) == len(spaces.fields["D"].boundary["all"])
    assert np.all(values[np.isin(fixed, dfix)] == 0)


# --- manufactured loads ----------------------------------------------------------------------

def test_manufactured_body_force_matches_finite_differences():
    ce = IsotropicLaw(85.4, 128.2)
    u = sine_field()
    f, M = manufactured_loads(u, ce, mu_c=0.7)
    rng = np.random.default_rng(0)

    def stress(x):
        G = u.grad(x)
        return apply_isotropic(ce, sym(G)) + 2 * 0.7 * 0.5 * (G - np.swapaxes(G, -1, -2))

    for x in rng.uniform(-SQ, SQ, size=(10, 2)):
        g = fd_gradient(stress, x)
        div = g[:, 0, 0] + g[:, 1, 1]
        assert np.allclose(f(x), -div, atol=1e-6)
        assert np.allclose(M(x), -stress(x), atol=1e-12)


def test_manufactured_loads_trivial_cases():
    ce = IsotropicLaw(1.0, 2.0)
    x = np.random.default_rng(1).uniform(-1, 1, size=(5, 2))
    G = np.array([[0.3, -0.1], [0.2, 0.4]])
    f, M = manufactured_loads(linear_field(G), ce)
    assert np.allclose(f(x), 0)
    assert np.allclose(M(x), M(x[:1]))
    f, M = manufactured_loads(zero_field(), ce)
    assert np.allclose(f(x), 0) and np.allclose(M(x), 0)


# --- solutions ------------------------------------------------------------------------------------

def test_zero_solution_has_zero_energy():
    mesh = square_mesh(1.0, 2)
    spec = ProblemSpec("PrimalSplit", {0: scaled_region(10.0)}, None, "NeumannFree")
    spaces = build_spaces(mesh, spec)
    sol = SolutionBundle(spaces, np.zeros(spaces.ndofs), spec)
    assert energy(sol) == 0.0
    assert all(v == 0 for v in field_norms(sol).values())


@pytest.mark.parametrize("alpha", [0.1, -0.03])
def test_patch_test(alpha):
    verts = np.array([[0, 0], [2, 0], [2, 1.5], [0, 1.5], [0.9, 0.7], [1.4, 0.3]], float)
    cells = np.array([[0, 5, 4], [5, 1, 2], [5, 2, 4], [4, 2, 3], [0, 4, 3], [0, 1, 5]])
    mesh = Mesh.from_arrays(verts, cells)
    mesh.validate()
    region = scaled_region(10.0)
    ut = linear_field(alpha * np.eye(2))
    sol = _solve(ProblemSpec("PrimalSplit", {0: region}, ut, "NeumannFree"), mesh)
    I_exact = spherical_microdistortion(region.ce, region.cm, alpha * np.eye(2), np.zeros((2, 2)))
    err = error_norms(sol, {"u": ut.value, "I": lambda X: np.broadcast_to(I_exact, X.shape[:-1] + (2, 2))})
    area = mesh.signed_areas().sum()
    assert err["u"] <= 1e-10 * abs(alpha) * np.sqrt(area)
    assert err["D"] <= 1e-10 * abs(alpha) * np.sqrt(area)
    assert err["I"] <= 1e-10 * abs(alpha) * np.sqrt(area)


def test_error_against_discrete_solution_is_zero():
    mesh = square_mesh(1.0, 2)
    ut = linear_field([[0.1, 0.05], [-0.05, 0.1]])  # spherical plus skew: reproduced exactly
    sol = _solve(ProblemSpec("PrimalSplit", {0: scaled_region(10.0, 1.0)}, ut, "NeumannFree"), mesh)
    assert error_norms(sol, {"u": ut.value})["u"] <= 1e-13
    # errors against nothing are the norms
    e, n = error_norms(sol), field_norms(sol)
    assert e["u"] == pytest.approx(n["u"]) and e["D"] == pytest.approx(n["D"])


def test_split_fields_are_orthogonal():
    mesh = square_mesh(SQ, 2)
    sol = _solve(convergence_problem("PrimalSplit"), mesh)
    rule = triangle_rule(10)
    ev = evaluate_fields(sol, np.arange(mesh.n_cells), rule.xi)
    inner = np.einsum("cqij,cqij,q,c->", ev["D"], ev["I"], rule.weights, np.abs(ev["_det"]))
    assert abs(inner) <= 1e-12 * max(1.0, field_norms(sol)["D"] * field_norms(sol)["I"])
    assert np.abs(ev["D"][..., 0, 0] + ev["D"][..., 1, 1]).max() <= 1e-12


@pytest.mark.parametrize("lc", [0.1, 1.0, 10.0])
def test_mixed_agrees_with_primal(lc):
    mesh = square_mesh(SQ, 4)
    p = _solve(convergence_problem("PrimalSplit", lc), mesh)
    m = _solve(convergence_problem("MixedSplit", lc), mesh)
    for name in ("u", "D", "I"):
        a, b = p.field(name), m.field(name)
        assert np.abs(a - b).max() <= 1e-8 * max(1.0, np.abs(a).max())


def test_weak_deviatoric_constraint():
    mesh = square_mesh(1.0, 3)
    spec = ProblemSpec("WeakDeviatoric", {0: scaled_region(10.0, 1.0)},
                       linear_field([[0.1, 0.0], [0.1, 0.1]]), "ZeroTangentialD")
    sol = _solve(spec, mesh)
    assert weak_trace_residual(sol) <= 1e-10
    with pytest.raises(FormulationSpaceMismatch):
        weak_trace_residual(_solve(ProblemSpec("PrimalSplit", spec.materials, spec.dirichlet_u,
                                               "ZeroTangentialD"), mesh))


def test_primal_energy_decreases_under_refinement():
    energies = []
    for n in (2, 4, 8):
        mesh = square_mesh(SQ, n)
        spec = ProblemSpec("PrimalSplit", {0: scaled_region(10.0)}, sine_field(), "ZeroTangentialD")
        energies.append(energy(_solve(spec, mesh), spec))
    assert energies[0] >= energies[1] >= energies[2]


def test_solves_are_bitwise_reproducible():
    mesh = square_mesh(SQ, 4)
    a = _solve(convergence_problem("MixedSplit"), mesh).coefficients
    b = _solve(convergence_problem("MixedSplit"), mesh).coefficients
    assert np.array_equal(a, b)


def test_unconstrained_matrix_kept():
    mesh = square_mesh(1.0, 2)
    spec = ProblemSpec("PrimalSplit", {0: scaled_region(10.0)}, sine_field(), "ZeroTangentialD")
    raw = assemble(spec, build_spaces(mesh, spec))
    red = apply_dirichlet(raw, spec)
    assert sp.issparse(red.unconstrained_matrix)
    diag = red.matrix.diagonal()[red.fixed]
    assert np.all(diag == 1.0)
    offdiag = red.matrix[red.fixed].toarray()
    offdiag[np.arange(len(red.fixed)), red.fixed] = 0
    assert np.all(offdiag == 0)
