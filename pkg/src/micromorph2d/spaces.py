"""Global function spaces: cell-to-global dof maps and boundary dof sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elements import DeviatoricElement, LagrangeElement, NedelecIIElement
from .mesh import Mesh

FAMILIES = ("LagrangeCG", "LagrangeDG", "SphericalDG", "DeviatoricY", "NedelecII")


class UnsupportedDegree(ValueError):
    pass


@dataclass(eq=False)
class FunctionSpace:
    """Discrete space on a mesh.

    ``cell_dofs[c, i]`` is the global index of local basis function ``i`` on
    cell ``c`` and ``cell_signs[c, i]`` the factor (+1 or -1) relating the
    two.  Vector-valued Lagrange spaces (``ncomp = 2``) number component
    blocks consecutively; NedelecII tensor spaces number row blocks
    consecutively.
    """

    mesh: Mesh
    family: str
    degree: int
    element: object
    ncomp: int
    ndofs: int
    cell_dofs: np.ndarray
    cell_signs: np.ndarray
    boundary: dict = field(default_factory=dict)

    @property
    def local_size(self) -> int:
        return self.cell_dofs.shape[1]


def _lagrange_scalar_map(mesh: Mesh, p: int, continuous: bool):
    el = LagrangeElement(p, continuous)
    C = mesh.n_cells
    if not continuous:
        n = el.ndofs
        return el, np.arange(C * n).reshape(C, n), C * n
    V, E = mesh.n_vertices, mesh.n_edges
    ni = (p - 1) * (p - 2) // 2
    ndofs = V + (p - 1) * E + ni * C
    cd = np.empty((C, el.ndofs), dtype=np.int64)
    cd[:, :3] = mesh.cells
    col = 3
    j = np.arange(p - 1)
    for k in range(3):
        fwd = mesh.cell_edge_signs[:, k, None] > 0
        jg = np.where(fwd, j[None], p - 2 - j[None])
        cd[:, col:col + p - 1] = V + (p - 1) * mesh.cell_edges[:, k, None] + jg
        col += p - 1
    cd[:, col:] = V + (p - 1) * E + ni * np.arange(C)[:, None] + np.arange(ni)[None]
    return el, cd, ndofs


def _lagrange_boundary(mesh: Mesh, p: int, cd: np.ndarray, edges: np.ndarray) -> np.ndarray:
    if len(edges) == 0:
        return np.zeros(0, dtype=np.int64)
    V = mesh.n_vertices
    verts = np.unique(mesh.edges[edges].ravel())
    ed = (V + (p - 1) * edges[:, None] + np.arange(p - 1)[None]).ravel()
    return np.unique(np.concatenate([verts, ed]))


def build_space(mesh: Mesh, family: str, p: int, ncomp: int = 1) -> FunctionSpace:
    """Build a global space; ``ncomp = 2`` gives vector Lagrange spaces."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    lo = 0 if family in ("LagrangeDG", "SphericalDG") else 1
    if not lo <= p <= 6:
        raise UnsupportedDegree(f"{family} does not support degree {p}")
    dirichlet_edges = np.array(sorted(mesh.boundary_tags), dtype=np.int64)
    if family in ("LagrangeCG", "LagrangeDG", "SphericalDG"):
        cont = family == "LagrangeCG"
        el, cd, n = _lagrange_scalar_map(mesh, p, cont)
        bnd = _lagrange_boundary(mesh, p, cd, dirichlet_edges) if cont else np.zeros(0, np.int64)
        cds = np.concatenate([cd + r * n for r in range(ncomp)], axis=1)
        bnds = np.concatenate([bnd + r * n for r in range(ncomp)])
        return FunctionSpace(mesh, family, p, el, ncomp, ncomp * n, cds, np.ones_like(cds),
                             {"all": bnds, "scalar_ndofs": n})
    if family == "DeviatoricY":
        return _deviatoric_space(mesh, p, dirichlet_edges)
    return _nedelec_space(mesh, p, dirichlet_edges)


def _deviatoric_space(mesh: Mesh, p: int, edges: np.ndarray) -> FunctionSpace:
    el = DeviatoricElement(p)
    V, E, C = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    ne = 2 * (p - 1)
    nloc_cell = 3 * (p - 1) + 3 * len(el.interior_exps)
    ndofs = 3 * V + ne * E + nloc_cell * C
    cd = np.empty((C, el.ndofs), dtype=np.int64)
    cd[:, el.vertex_dofs.ravel()] = (3 * mesh.cells[:, :, None] + np.arange(3)).reshape(C, 9)
    j = np.arange(p - 1)
    for k in range(3):
        fwd = mesh.cell_edge_signs[:, k, None] > 0
        jg = np.where(fwd, j[None], p - 2 - j[None])
        for fam in range(2):
            cd[:, el.edge_dofs[k, fam]] = 3 * V + ne * mesh.cell_edges[:, k, None] + fam * (p - 1) + jg
    local = np.concatenate([el.edgecell_dofs.ravel(), el.cell_dofs])
    cd[:, local] = 3 * V + ne * E + nloc_cell * np.arange(C)[:, None] + np.arange(nloc_cell)[None]
    if len(edges):
        verts = np.unique(mesh.edges[edges].ravel())
        vd = (3 * verts[:, None] + np.arange(3)).ravel()
        ed = (3 * V + ne * edges[:, None] + np.arange(ne)[None]).ravel()
        bnd = np.unique(np.concatenate([vd, ed]))
    else:
        vd = ed = bnd = np.zeros(0, np.int64)
    return FunctionSpace(mesh, "DeviatoricY", p, el, 1, ndofs, cd, np.ones_like(cd),
                         {"all": bnd, "vertex": vd, "edge": ed})


def _nedelec_space(mesh: Mesh, p: int, edges: np.ndarray) -> FunctionSpace:
    el = NedelecIIElement(p)
    E, C = mesh.n_edges, mesh.n_cells
    ni = el.nvec - 3 * (p + 1)
    nvec = (p + 1) * E + ni * C
    cd = np.empty((C, el.nvec), dtype=np.int64)
    sg = np.ones((C, el.nvec), dtype=np.int64)
    m = np.arange(p + 1)
    for k in range(3):
        cols = slice(k * (p + 1), (k + 1) * (p + 1))
        cd[:, cols] = (p + 1) * mesh.cell_edges[:, k, None] + m[None]
        rev = mesh.cell_edge_signs[:, k] < 0
        sg[rev, cols] = el.edge_moment_sign[None]
    cd[:, 3 * (p + 1):] = (p + 1) * E + ni * np.arange(C)[:, None] + np.arange(ni)[None]
    cds = np.concatenate([cd, cd + nvec], axis=1)
    sgs = np.concatenate([sg, sg], axis=1)
    if len(edges):
        ed = ((p + 1) * edges[:, None] + m[None]).ravel()
        bnd = np.concatenate([ed, ed + nvec])
    else:
        bnd = np.zeros(0, np.int64)
    return FunctionSpace(mesh, "NedelecII", p, el, 1, 2 * nvec, cds, sgs,
                         {"all": bnd, "vector_ndofs": nvec})


def dof_count_formula(mesh: Mesh, family: str, p: int) -> int:
    """Closed-form dof counts used as an independent check of the maps."""
    V, E, C = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    if family == "LagrangeCG":
        return V + (p - 1) * E + (p - 1) * (p - 2) // 2 * C
    if family in ("LagrangeDG", "SphericalDG"):
        return (p + 1) * (p + 2) // 2 * C
    if family == "DeviatoricY":
        return 3 * V + 2 * (p - 1) * E + (3 * (p - 1) + 3 * (p - 2) * (p - 1) // 2) * C
    if family == "NedelecII":
        return 2 * ((p + 1) * E + (p + 1) * (p - 1) * C)
    raise ValueError(family)


def local_interpolants_y(space: FunctionSpace, target) -> np.ndarray:
    """Cellwise coefficients (c, nd) of the deviatoric interpolant of ``target``."""
    mesh = space.mesh
    el = space.element
    J = mesh.jacobians()
    x0 = mesh.vertices[mesh.cells[:, 0]]
    phi = el.functionals(J, x0, target)
    F = el.functional_matrix(J)
    return np.linalg.solve(F, phi[..., None])[..., 0]


def interpolate_y(space: FunctionSpace, target) -> np.ndarray:
    """Global coefficients of the interpolant of a continuous trace-free field.

    Vertex values, tangential edge moments, edge-cell moments and interior
    moments are matched cell by cell.  Shared vertex and edge coefficients
    depend only on data of that entity, so neighbouring cells agree on them.
    """
    if space.family != "DeviatoricY":
        raise ValueError("interpolate_y needs a DeviatoricY space")
    local = local_interpolants_y(space, target)
    coef = np.zeros(space.ndofs)
    coef[space.cell_dofs] = local * space.cell_signs
    return coef


def evaluate_tensor_field(space: FunctionSpace, coef: np.ndarray, xi: np.ndarray):
    """Values (c, nq, 2, 2) and row-wise curls (c, nq, 2) of a tensor-valued field."""
    J = space.mesh.jacobians()
    vals, curls = space.element.physical(J, xi)
    loc = coef[space.cell_dofs] * space.cell_signs
    return np.einsum("cb,cbqij->cqij", loc, vals), np.einsum("cb,cbqi->cqi", loc, curls)
