"""Assembly of the planar micromorphic formulations.

Four formulations share one assembly kernel:

``PrimalSplit``     u in [CG^k]^2, D in the trace-free element of degree k-1,
                    spherical part I = psi 1 with psi in DG^(k-1).
``MixedSplit``      PrimalSplit plus the hyper-stress h = mu_M Lc^2 Curl D in
                    [DG^(k-2)]^2 (and two mean-value multipliers when the
                    tangential trace of D is prescribed on the whole boundary).
``FullCurl``        u in [CG^k]^2 and an unsplit microdistortion P whose rows
                    are second-kind Nedelec fields of degree k-1.
``WeakDeviatoric``  D with Nedelec rows, I as above, and a DG^(k-2)
                    multiplier enforcing tr D = 0 weakly.

The energy density is
``1/2 [<Ce sym E, sym E> + 2 mu_c |skw E|^2 + <Cm sym Q, sym Q> + mu_M Lc^2 |Curl D|^2]``
with ``E = Du - D - I`` and ``Q = D + I`` (``E = Du - P``, ``Q = P`` for
FullCurl).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .elements import REF_VERTICES, _legendre01
from .fields import AnalyticField
from .mesh import LOCAL_EDGES, Mesh
from .quadrature import interval_rule, triangle_rule
from .spaces import FunctionSpace, build_space, UnsupportedDegree  # noqa: F401
from .tensorops import IDENTITY, IsotropicLaw, MaterialRegion, apply_isotropic, dev, skw, sym

FORMULATIONS = ("PrimalSplit", "MixedSplit", "FullCurl", "WeakDeviatoric")
COUPLINGS = ("ConsistentCoupling", "ZeroTangentialD", "NeumannFree")


class MissingMaterial(KeyError):
    pass


class FormulationSpaceMismatch(ValueError):
    pass


@dataclass
class ProblemSpec:
    """Boundary value problem data.

    ``dirichlet_u`` is prescribed on every tagged boundary edge; ``coupling``
    selects the condition on the tangential trace of the microdistortion
    there.  Loads are callables of physical points ``(..., 2)``; the couple
    force returns 2x2 tensors.  ``edge_trace`` chooses whether consistent
    coupling projects ``(Du~) t`` or ``(dev Du~) t`` on boundary edges.
    """

    formulation: str
    materials: dict
    dirichlet_u: AnalyticField | None = None
    coupling: str = "NeumannFree"
    body_force: Callable | None = None
    couple_force: Callable | None = None
    degree: int = 4
    edge_trace: str = "full"

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.edge_trace not in ("full", "dev"):
            raise ValueError("edge_trace must be 'full' or 'dev'")

    def material(self, region: int) -> MaterialRegion:
        try:
            return self.materials[int(region)]
        except KeyError:
            raise MissingMaterial(f"no material for region {region}") from None


@dataclass(eq=False)
class Spaces:
    """Field spaces of one formulation and their global offsets.

    ``extras`` maps global scalar unknowns (mean-value multipliers of h, the
    skew gauge) to their global index.
    """

    mesh: Mesh
    formulation: str
    degree: int
    fields: dict
    offsets: dict
    extras: dict
    ndofs: int

    def block(self, name: str) -> slice:
        o = self.offsets[name]
        return slice(o, o + self.fields[name].ndofs)

    @property
    def micro_name(self) -> str:
        return "P" if self.formulation == "FullCurl" else "D"


def _needs_skew_gauge(spec: ProblemSpec, mesh: Mesh) -> bool:
    if spec.coupling != "NeumannFree" and len(mesh.boundary_tags) > 0:
        return False
    regions = np.unique(mesh.cell_regions)
    return all(spec.material(r).mu_c == 0 for r in regions)


def build_spaces(mesh: Mesh, spec: ProblemSpec) -> Spaces:
    """Spaces for ``spec.formulation`` with displacement degree ``spec.degree``."""
    k = spec.degree
    if k < 2:
        raise UnsupportedDegree("displacement degree must be at least 2")
    f = spec.formulation
    fields = {"u": build_space(mesh, "LagrangeCG", k, ncomp=2)}
    if f in ("PrimalSplit", "MixedSplit"):
        fields["D"] = build_space(mesh, "DeviatoricY", k - 1)
    elif f == "WeakDeviatoric":
        fields["D"] = build_space(mesh, "NedelecII", k - 1)
    else:
        fields["P"] = build_space(mesh, "NedelecII", k - 1)
    if f != "FullCurl":
        fields["I"] = build_space(mesh, "SphericalDG", k - 1)
    if f == "MixedSplit":
        fields["h"] = build_space(mesh, "LagrangeDG", k - 2, ncomp=2)
    if f == "WeakDeviatoric":
        fields["V"] = build_space(mesh, "LagrangeDG", k - 2)
    offsets, n = {}, 0
    for name, space in fields.items():
        offsets[name] = n
        n += space.ndofs
    extras = {}
    full_boundary = len(mesh.boundary_tags) == len(mesh.boundary_edges()) and len(mesh.boundary_tags) > 0
    if f == "MixedSplit" and spec.coupling != "NeumannFree" and full_boundary:
        extras["h_mean_0"] = n
        extras["h_mean_1"] = n + 1
        n += 2
    if _needs_skew_gauge(spec, mesh):
        extras["skew_gauge"] = n
        n += 1
    return Spaces(mesh, f, k, fields, offsets, extras, n)


# --- per-cell tabulation ----------------------------------------------------

def tabulate_cells(spaces: Spaces, cells: np.ndarray, xi: np.ndarray) -> dict:
    """Physical basis data of every field on ``cells`` at reference points ``xi``.

    Returns a dict with, per field, ``dofs`` (c, nd) global indices and the
    arrays ``val`` and, where defined, ``grad`` or ``curl``.  Signs of the
    global basis are already applied.
    """
    mesh = spaces.mesh
    J = mesh.jacobians()[cells]
    out = {}
    for name, space in spaces.fields.items():
        el = space.element
        dofs = space.cell_dofs[cells] + spaces.offsets[name]
        sg = space.cell_signs[cells]
        if space.family in ("LagrangeCG", "LagrangeDG", "SphericalDG"):
            v, g = el.physical(J, xi)
            nb = el.ndofs
            c, nq = len(cells), v.shape[1]
            if space.ncomp == 1:
                out[name] = {"dofs": dofs, "val": np.broadcast_to(v, (c, nb, nq)), "grad": g}
            else:
                val = np.zeros((c, 2, nb, nq, 2))
                grad = np.zeros((c, 2, nb, nq, 2, 2))
                for r in range(2):
                    val[:, r, :, :, r] = v
                    grad[:, r, :, :, r, :] = g
                out[name] = {"dofs": dofs, "val": val.reshape(c, 2 * nb, nq, 2),
                             "grad": grad.reshape(c, 2 * nb, nq, 2, 2)}
        else:
            v, cu = el.physical(J, xi)
            if np.any(sg != 1):
                v = v * sg[:, :, None, None, None]
                cu = cu * sg[:, :, None, None]
            out[name] = {"dofs": dofs, "val": v, "curl": cu}
    out["_x"] = mesh.map_points(xi, cells)
    out["_det"] = np.linalg.det(J)
    return out


def _strain_arrays(spaces: Spaces, tab: dict):
    """Per-dof contributions to E (strain), Q (micro) and Curl of the micro field.

    Returns the concatenated local dof indices of the primal fields plus
    arrays of shapes (c, n, nq, 2, 2), (c, n, nq, 2, 2) and (c, n, nq, 2).
    """
    u = tab["u"]
    c, nu, nq = u["val"].shape[:3]
    parts_E, parts_Q, parts_C, dofs = [u["grad"]], [np.zeros_like(u["grad"])], [np.zeros((c, nu, nq, 2))], [u["dofs"]]
    m = tab[spaces.micro_name]
    parts_E.append(-m["val"])
    parts_Q.append(m["val"])
    parts_C.append(m["curl"])
    dofs.append(m["dofs"])
    if "I" in tab:
        iv = tab["I"]["val"][..., None, None] * IDENTITY
        parts_E.append(-iv)
        parts_Q.append(iv)
        parts_C.append(np.zeros(iv.shape[:3] + (2,)))
        dofs.append(tab["I"]["dofs"])
    return (np.concatenate(dofs, axis=1), np.concatenate(parts_E, axis=1),
            np.concatenate(parts_Q, axis=1), np.concatenate(parts_C, axis=1))


def _material_arrays(spec: ProblemSpec, regions: np.ndarray) -> dict:
    keys = ("mu_e", "lam_e", "mu_c", "mu_m", "lam_m", "curv")
    table = {}
    for r in np.unique(regions):
        m = spec.material(r)
        table[int(r)] = (m.ce.mu, m.ce.lam, m.mu_c, m.cm.mu, m.cm.lam, m.curvature_modulus)
    vals = np.array([table[int(r)] for r in regions]).reshape(len(regions), 6)
    return {k: vals[:, i] for i, k in enumerate(keys)}


def _sym_features(T):
    """Features whose dot products give sym(T):sym(T') and tr T tr T'."""
    s12 = (T[..., 0, 1] + T[..., 1, 0]) / np.sqrt(2.0)
    return np.stack([T[..., 0, 0], T[..., 1, 1], s12], axis=-1), T[..., 0, 0] + T[..., 1, 1]


def _gram(F, wts, coef):
    """sum_q w_q coef F_a(q) . F_b(q) for F of shape (c, n, nq[, f])."""
    c, n = F.shape[:2]
    Fw = F * wts.reshape(wts.shape + (1,) * (F.ndim - 3))[:, None]
    A = Fw.reshape(c, n, -1)
    B = F.reshape(c, n, -1)
    return coef[:, None, None] * np.matmul(A, B.transpose(0, 2, 1))


def _cross(F, G, wts):
    c, n = F.shape[:2]
    m = G.shape[1]
    Fw = F * wts.reshape(wts.shape + (1,) * (F.ndim - 3))[:, None]
    return np.matmul(Fw.reshape(c, n, -1), G.reshape(c, m, -1).transpose(0, 2, 1))


@dataclass
class LinearSystem:
    """Sparse symmetric system with Dirichlet bookkeeping.

    ``matrix``/``rhs`` hold the unconstrained operator until
    :func:`apply_dirichlet` fills ``fixed``/``fixed_values`` and replaces them
    by the reduced system (identity rows on fixed dofs, lifted right-hand side).
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    spaces: Spaces
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    fixed_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    unconstrained_matrix: sp.csr_matrix | None = None
    unconstrained_rhs: np.ndarray | None = None


def _check_spaces(spec: ProblemSpec, spaces: Spaces):
    f = spec.formulation
    fam = {n: s.family for n, s in spaces.fields.items()}
    ok = spaces.formulation == f and {
        "PrimalSplit": fam.get("D") == "DeviatoricY" and "h" not in fam,
        "MixedSplit": fam.get("D") == "DeviatoricY" and "h" in fam,
        "WeakDeviatoric": fam.get("D") == "NedelecII" and "V" in fam,
        "FullCurl": fam.get("P") == "NedelecII",
    }[f]
    if not ok:
        raise FormulationSpaceMismatch(f"spaces {fam} do not fit formulation {f}")
    if f == "MixedSplit":
        for r in np.unique(spaces.mesh.cell_regions):
            if spec.material(r).curvature_modulus <= 0:
                raise FormulationSpaceMismatch("the mixed formulation needs mu_M Lc^2 > 0")


def assemble(spec: ProblemSpec, spaces: Spaces, chunk: int = 256) -> LinearSystem:
    """Assemble the symmetric system matrix and load vector."""
    _check_spaces(spec, spaces)
    mesh = spaces.mesh
    rule = triangle_rule(2 * spaces.degree + 2)
    xi, w = rule.xi, rule.weights
    rows, cols, vals = [], [], []
    rhs = np.zeros(spaces.ndofs)
    mean_rows = {0: np.zeros(spaces.ndofs), 1: np.zeros(spaces.ndofs)}
    skew_row = np.zeros(spaces.ndofs)
    for start in range(0, mesh.n_cells, chunk):
        cells = np.arange(start, min(start + chunk, mesh.n_cells))
        tab = tabulate_cells(spaces, cells, xi)
        wts = w[None, :] * np.abs(tab["_det"])[:, None]
        mat = _material_arrays(spec, mesh.cell_regions[cells])
        dofs, E, Q, C = _strain_arrays(spaces, tab)
        symE, trE = _sym_features(E)
        symQ, trQ = _sym_features(Q)
        skE = (E[..., 0, 1] - E[..., 1, 0]) / np.sqrt(2.0)
        K = (_gram(symE, wts, 2 * mat["mu_e"]) + _gram(trE, wts, mat["lam_e"])
             + _gram(skE, wts, 2 * mat["mu_c"]) + _gram(symQ, wts, 2 * mat["mu_m"])
             + _gram(trQ, wts, mat["lam_m"]))
        if spec.formulation != "MixedSplit":
            K += _gram(C, wts, mat["curv"])
        blocks = [(dofs, dofs, K)]
        # right-hand side
        X = tab["_x"]
        r = np.zeros(dofs.shape)
        if spec.body_force is not None:
            f = spec.body_force(X)
            nu = tab["u"]["val"].shape[1]
            r[:, :nu] += np.einsum("cbqi,cqi,cq->cb", tab["u"]["val"], f, wts)
        if spec.couple_force is not None:
            M = spec.couple_force(X)
            r += np.einsum("cbqij,cqij,cq->cb", Q, M, wts)
        np.add.at(rhs, dofs, r)
        micro = tab[spaces.micro_name]
        if spec.formulation == "MixedSplit":
            h = tab["h"]
            B = _cross(micro["curl"], h["val"], wts)
            Mh = _gram(h["val"], wts, -1.0 / mat["curv"])
            blocks += [(micro["dofs"], h["dofs"], B), (h["dofs"], micro["dofs"], B.transpose(0, 2, 1)),
                       (h["dofs"], h["dofs"], Mh)]
            for comp in (0, 1):
                np.add.at(mean_rows[comp], h["dofs"], np.einsum("cbq,cq->cb", h["val"][..., comp], wts))
        if spec.formulation == "WeakDeviatoric":
            V = tab["V"]
            trD = micro["val"][..., 0, 0] + micro["val"][..., 1, 1]
            B = _cross(trD, V["val"], wts)
            blocks += [(micro["dofs"], V["dofs"], B), (V["dofs"], micro["dofs"], B.transpose(0, 2, 1))]
        if "skew_gauge" in spaces.extras:
            sk = 0.5 * (micro["val"][..., 0, 1] - micro["val"][..., 1, 0])
            np.add.at(skew_row, micro["dofs"], np.einsum("cbq,cq->cb", sk, wts))
        for rd, cd, blk in blocks:
            rows.append(np.broadcast_to(rd[:, :, None], blk.shape).ravel())
            cols.append(np.broadcast_to(cd[:, None, :], blk.shape).ravel())
            vals.append(blk.ravel())
    extra_rows = []
    if "h_mean_0" in spaces.extras:
        extra_rows += [(spaces.extras["h_mean_0"], mean_rows[0]), (spaces.extras["h_mean_1"], mean_rows[1])]
    if "skew_gauge" in spaces.extras:
        extra_rows.append((spaces.extras["skew_gauge"], skew_row))
    for idx, row in extra_rows:
        nz = np.flatnonzero(row)
        rows += [np.full(len(nz), idx), nz]
        cols += [nz, np.full(len(nz), idx)]
        vals += [row[nz], row[nz]]
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(spaces.ndofs, spaces.ndofs)).tocsr()
    A.sum_duplicates()
    A = 0.5 * (A + A.T)
    A = A.tocsr()
    return LinearSystem(A, rhs, spaces, unconstrained_matrix=A, unconstrained_rhs=rhs.copy())


# --- Dirichlet data ---------------------------------------------------------

def _cg_dof_points(space: FunctionSpace) -> np.ndarray:
    """Physical position of every scalar CG dof."""
    mesh = space.mesh
    n = space.boundary["scalar_ndofs"]
    nb = space.element.ndofs
    X = mesh.map_points(space.element.nodes)
    pts = np.empty((n, 2))
    pts[space.cell_dofs[:, :nb].ravel()] = X.reshape(-1, 2)
    return pts


def _boundary_edge_local(mesh: Mesh, edges: np.ndarray):
    """For each edge: an adjacent cell and the local edge index there."""
    cells = mesh.edge_cells[edges, 0]
    local = np.argmax(mesh.cell_edges[cells] == edges[:, None], axis=1)
    return cells, local


def dirichlet_values(spec: ProblemSpec, spaces: Spaces):
    """Fixed global dofs and their values for u and the microdistortion."""
    mesh = spaces.mesh
    ut = spec.dirichlet_u
    fixed, values = [], []
    us = spaces.fields["u"]
    bnd = us.boundary["all"]
    n = us.boundary["scalar_ndofs"]
    if len(bnd):
        pts = _cg_dof_points(us)
        scalar = bnd[bnd < n]
        if ut is None:
            vals = np.zeros((len(scalar), 2))
        else:
            vals = ut.value(pts[scalar])
        for r in range(2):
            fixed.append(spaces.offsets["u"] + scalar + r * n)
            values.append(vals[:, r])
    if spec.coupling != "NeumannFree" and len(mesh.boundary_tags):
        name = spaces.micro_name
        space = spaces.fields[name]
        off = spaces.offsets[name]
        if spec.coupling == "ZeroTangentialD" or ut is None:
            dofs = space.boundary["all"]
            fixed.append(off + dofs)
            values.append(np.zeros(len(dofs)))
        elif space.family == "DeviatoricY":
            d, v = _deviatoric_coupling(spec, space)
            fixed.append(off + d)
            values.append(v)
        else:
            d, v = _nedelec_coupling(spec, space)
            fixed.append(off + d)
            values.append(v)
    if not fixed:
        return np.zeros(0, np.int64), np.zeros(0)
    fixed = np.concatenate(fixed)
    values = np.concatenate(values)
    order = np.argsort(fixed, kind="stable")
    fixed, values = fixed[order], values[order]
    keep = np.concatenate([[True], fixed[1:] != fixed[:-1]])
    return fixed[keep], values[keep]


def _deviatoric_coupling(spec: ProblemSpec, space: FunctionSpace):
    """Vertex dofs from dev(Du~), edge dofs by L2 projection of the trace."""
    mesh = space.mesh
    el = space.element
    p = el.p
    ut = spec.dirichlet_u
    edges = np.array(sorted(mesh.boundary_tags), dtype=np.int64)
    verts = np.unique(mesh.edges[edges].ravel())
    G = dev(ut.grad(mesh.vertices[verts]))
    vdofs = (3 * verts[:, None] + np.arange(3)).ravel()
    vvals = np.stack([G[:, 0, 0], G[:, 0, 1], G[:, 1, 0]], axis=-1).ravel()
    global_vals = np.zeros(space.ndofs)
    global_vals[vdofs] = vvals
    out_d, out_v = [vdofs], [vvals]
    if p >= 2:
        cells, local = _boundary_edge_local(mesh, edges)
        s, w = interval_rule(2 * p + 4)
        for k, (a, b) in enumerate(LOCAL_EDGES):
            sel = local == k
            if not np.any(sel):
                continue
            cs = cells[sel]
            J = mesh.jacobians()[cs]
            xi = REF_VERTICES[a] + s[:, None] * (REF_VERTICES[b] - REF_VERTICES[a])
            vals, _ = el.physical(J, xi)  # (c, nd, ns, 2, 2)
            t = J @ (REF_VERTICES[b] - REF_VERTICES[a])
            trace = np.einsum("cbqij,cj->cbqi", vals, t)
            X = mesh.map_points(xi, cs)
            Du = ut.grad(X)
            if spec.edge_trace == "dev":
                Du = dev(Du)
            target = np.einsum("cqij,cj->cqi", Du, t)
            vloc = el.vertex_dofs[[a, b]].ravel()
            vglob = space.cell_dofs[cs][:, vloc]
            target -= np.einsum("cbqi,cb->cqi", trace[:, vloc], global_vals[vglob])
            eloc = el.edge_dofs[k].ravel()
            Psi = trace[:, eloc]
            N = np.einsum("cbqi,cdqi,q->cbd", Psi, Psi, w)
            rhs = np.einsum("cbqi,cqi,q->cb", Psi, target, w)
            coef = np.linalg.solve(N, rhs[..., None])[..., 0]
            out_d.append(space.cell_dofs[cs][:, eloc].ravel())
            out_v.append(coef.ravel())
    return np.concatenate(out_d), np.concatenate(out_v)


def _nedelec_coupling(spec: ProblemSpec, space: FunctionSpace):
    """Row-wise tangential moments of Du~ on the boundary edges."""
    mesh = space.mesh
    el = space.element
    p = el.p
    ut = spec.dirichlet_u
    edges = np.array(sorted(mesh.boundary_tags), dtype=np.int64)
    cells, local = _boundary_edge_local(mesh, edges)
    s, w = interval_rule(2 * p + 6)
    leg = _legendre01(p, s)
    nvec = space.boundary["vector_ndofs"]
    out_d, out_v = [], []
    for k, (a, b) in enumerate(LOCAL_EDGES):
        sel = local == k
        if not np.any(sel):
            continue
        cs, es = cells[sel], edges[sel]
        J = mesh.jacobians()[cs]
        xi = REF_VERTICES[a] + s[:, None] * (REF_VERTICES[b] - REF_VERTICES[a])
        t = J @ (REF_VERTICES[b] - REF_VERTICES[a])
        Du = ut.grad(mesh.map_points(xi, cs))
        tr_t = np.einsum("cqij,cj->cqi", Du, t)  # row-wise tangential component
        mom = np.einsum("cqr,mq,q->crm", tr_t, leg, w)
        sign = np.where(mesh.cell_edge_signs[cs, k] > 0, 1.0, 0.0)[:, None] + \
            np.where(mesh.cell_edge_signs[cs, k] < 0, 1.0, 0.0)[:, None] * el.edge_moment_sign[None]
        for r in range(2):
            out_d.append(((p + 1) * es[:, None] + np.arange(p + 1)[None] + r * nvec).ravel())
            out_v.append((mom[:, r] * sign).ravel())
    return np.concatenate(out_d), np.concatenate(out_v)


def apply_dirichlet(system: LinearSystem, spec: ProblemSpec, spaces: Spaces | None = None) -> LinearSystem:
    """Symmetric elimination of the Dirichlet dofs with right-hand-side lift."""
    spaces = spaces or system.spaces
    fixed, values = dirichlet_values(spec, spaces)
    A = system.unconstrained_matrix
    b = system.unconstrained_rhs.copy()
    n = A.shape[0]
    g = np.zeros(n)
    g[fixed] = values
    b -= A @ g
    mask = np.ones(n)
    mask[fixed] = 0.0
    Dm = sp.diags(mask)
    Ared = (Dm @ A @ Dm).tocsr()
    diag = np.zeros(n)
    diag[fixed] = 1.0
    Ared = (Ared + sp.diags(diag)).tocsr()
    Ared.eliminate_zeros()
    b[fixed] = values
    return LinearSystem(Ared, b, spaces, fixed, values, A, system.unconstrained_rhs)


# --- solutions, norms and energy ---------------------------------------------

@dataclass
class SolutionBundle:
    """Solved coefficients with per-field views."""

    spaces: Spaces
    coefficients: np.ndarray
    spec: ProblemSpec | None = None

    def field(self, name: str) -> np.ndarray:
        return self.coefficients[self.spaces.block(name)]

    @property
    def names(self):
        return list(self.spaces.fields)

    def extra(self, name: str) -> float:
        return float(self.coefficients[self.spaces.extras[name]])


def evaluate_fields(sol: SolutionBundle, cells: np.ndarray, xi: np.ndarray) -> dict:
    """Field values at reference points ``xi`` of ``cells``.

    Keys: ``u``, ``Du``, the micro field (``D`` or ``P``) and its ``curl``,
    ``I`` as a tensor, and ``h``/``V`` where present; ``_x`` holds the
    physical points and ``_det`` the Jacobian determinants.
    """
    tab = tabulate_cells(sol.spaces, cells, xi)
    x = sol.coefficients
    out = {"_x": tab["_x"], "_det": tab["_det"]}
    u = tab["u"]
    cu = x[u["dofs"]]
    out["u"] = np.einsum("cbqi,cb->cqi", u["val"], cu)
    out["Du"] = np.einsum("cbqij,cb->cqij", u["grad"], cu)
    m = sol.spaces.micro_name
    cm = x[tab[m]["dofs"]]
    out[m] = np.einsum("cbqij,cb->cqij", tab[m]["val"], cm)
    out["curl"] = np.einsum("cbqi,cb->cqi", tab[m]["curl"], cm)
    if "I" in tab:
        psi = np.einsum("cbq,cb->cq", tab["I"]["val"], x[tab["I"]["dofs"]])
        out["I"] = psi[..., None, None] * IDENTITY
    if "h" in tab:
        out["h"] = np.einsum("cbqi,cb->cqi", tab["h"]["val"], x[tab["h"]["dofs"]])
    if "V" in tab:
        out["V"] = np.einsum("cbq,cb->cq", tab["V"]["val"], x[tab["V"]["dofs"]])
    return out


def _integrate(sol: SolutionBundle, integrand: Callable[[dict], np.ndarray], chunk: int = 512,
               degree: int | None = None) -> float:
    mesh = sol.spaces.mesh
    rule = triangle_rule(degree or 2 * sol.spaces.degree + 2)
    total = 0.0
    for start in range(0, mesh.n_cells, chunk):
        cells = np.arange(start, min(start + chunk, mesh.n_cells))
        ev = evaluate_fields(sol, cells, rule.xi)
        ev["_cells"] = cells
        wts = rule.weights[None] * np.abs(ev["_det"])[:, None]
        total += float((integrand(ev) * wts).sum())
    return total


def _fro2(t):
    return (t**2).sum(axis=(-1, -2))


def field_norms(sol: SolutionBundle) -> dict:
    """L2 norms of u, the microdistortion and its parts, and of Curl."""
    m = sol.spaces.micro_name
    keys = {
        "u": lambda e: (e["u"] ** 2).sum(-1),
        m: lambda e: _fro2(e[m]),
        "curl": lambda e: (e["curl"] ** 2).sum(-1),
        "dev_" + m: lambda e: _fro2(dev(e[m])),
        "sph_" + m: lambda e: _fro2(e[m] - dev(e[m])),
    }
    if "I" in sol.spaces.fields:
        keys["I"] = lambda e: _fro2(e["I"])
    if "h" in sol.spaces.fields:
        keys["h"] = lambda e: (e["h"] ** 2).sum(-1)
    if m == "P":
        keys["sph_P"] = lambda e: _fro2(e["P"] - dev(e["P"]))
    return {k: np.sqrt(max(_integrate(sol, f), 0.0)) for k, f in keys.items()}


def error_norms(sol: SolutionBundle, exact: dict | None = None) -> dict:
    """L2 errors of every field against exact callbacks (missing ones are zero).

    Exact callbacks take points (..., 2) and return vectors for ``u``/``h``
    and 2x2 tensors for ``D``/``I``/``P``.
    """
    exact = exact or {}
    out = {}
    names = ["u", sol.spaces.micro_name] + [n for n in ("I", "h") if n in sol.spaces.fields]
    for name in names:
        ex = exact.get(name)

        def integrand(e, name=name, ex=ex):
            v = e[name]
            d = v - ex(e["_x"]) if ex is not None else v
            return (d**2).sum(axis=tuple(range(2, d.ndim)))
        out[name] = np.sqrt(max(_integrate(sol, integrand), 0.0))
    return out


def energy(sol: SolutionBundle, spec: ProblemSpec | None = None) -> float:
    """Total potential energy by quadrature of the fields."""
    spec = spec or sol.spec
    mesh = sol.spaces.mesh
    m = sol.spaces.micro_name

    def integrand(e):
        regions = mesh.cell_regions[e["_cells"]]
        mat = _material_arrays(spec, regions)
        Iv = e.get("I", 0.0)
        E = e["Du"] - e[m] - Iv
        Q = e[m] + Iv
        sE, sQ, kE = sym(E), sym(Q), skw(E)
        trE = E[..., 0, 0] + E[..., 1, 1]
        trQ = Q[..., 0, 0] + Q[..., 1, 1]
        c = lambda k: mat[k][:, None]  # noqa: E731
        dens = 0.5 * (2 * c("mu_e") * _fro2(sE) + c("lam_e") * trE**2 + 2 * c("mu_c") * _fro2(kE)
                      + 2 * c("mu_m") * _fro2(sQ) + c("lam_m") * trQ**2
                      + c("curv") * (e["curl"] ** 2).sum(-1))
        if spec.body_force is not None:
            dens = dens - np.einsum("cqi,cqi->cq", spec.body_force(e["_x"]), e["u"])
        if spec.couple_force is not None:
            dens = dens - np.einsum("cqij,cqij->cq", spec.couple_force(e["_x"]), Q)
        return dens

    return _integrate(sol, integrand)


def elasticity_energy(mesh: Mesh, law: IsotropicLaw, u_bc: AnalyticField, degree: int = 4) -> float:
    """Energy of the Dirichlet problem of plain linear elasticity."""
    from .solver import solve_sparse

    space = build_space(mesh, "LagrangeCG", degree, ncomp=2)
    rule = triangle_rule(2 * degree + 2)
    rows, cols, vals = [], [], []
    J = mesh.jacobians()
    for start in range(0, mesh.n_cells, 512):
        cells = np.arange(start, min(start + 512, mesh.n_cells))
        _, g = space.element.physical(J[cells], rule.xi)
        c, nb, nq = g.shape[:3]
        grad = np.zeros((c, 2, nb, nq, 2, 2))
        for r in range(2):
            grad[:, r, :, :, r, :] = g
        grad = grad.reshape(c, 2 * nb, nq, 2, 2)
        wts = rule.weights[None] * np.abs(np.linalg.det(J[cells]))[:, None]
        s, t = _sym_features(grad)
        ones = np.ones(c)
        K = _gram(s, wts, 2 * law.mu * ones) + _gram(t, wts, law.lam * ones)
        d = space.cell_dofs[cells]
        rows.append(np.broadcast_to(d[:, :, None], K.shape).ravel())
        cols.append(np.broadcast_to(d[:, None, :], K.shape).ravel())
        vals.append(K.ravel())
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(space.ndofs,) * 2).tocsr()
    n = space.boundary["scalar_ndofs"]
    bnd = space.boundary["all"]
    scalar = bnd[bnd < n]
    pts = _cg_dof_points(space)
    g = np.zeros(space.ndofs)
    v = u_bc.value(pts[scalar])
    fixed = np.concatenate([scalar, scalar + n])
    g[fixed] = np.concatenate([v[:, 0], v[:, 1]])
    free = np.setdiff1d(np.arange(space.ndofs), fixed)
    x = g.copy()
    x[free] = solve_sparse(A[free][:, free].tocsc(), -(A @ g)[free])
    return 0.5 * float(x @ (A @ x))


# --- manufactured loads -----------------------------------------------------

def manufactured_loads(u_exact: AnalyticField, ce: IsotropicLaw, mu_c: float = 0.0):
    """Loads for which (u_exact, 0, 0) solves the split problem.

    With the meso stress ``s = Ce sym Du + 2 mu_c skw Du`` the body force is
    ``f = -Div s`` and the couple force ``M = -s``.
    """

    def stress(G):
        return apply_isotropic(ce, sym(G)) + 2 * mu_c * skw(G)

    def body_force(x):
        H = u_exact.hess(np.asarray(x, float))
        dS = np.stack([stress(H[..., :, :, k]) for k in range(2)], axis=-1)
        return -(dS[..., :, 0, 0] + dS[..., :, 1, 1])

    def couple_force(x):
        return -stress(u_exact.grad(np.asarray(x, float)))

    return body_force, couple_force


def l2_project_dg(mesh: Mesh, degree: int, func: Callable, ncomp: int = 2, quad_degree: int | None = None):
    """Cellwise L2 projection of a vector field onto [DG^degree]^ncomp.

    Returns a callable evaluating the projection at reference points of all
    cells: ``proj(xi) -> (c, nq, ncomp)``.
    """
    from .elements import LagrangeElement

    el = LagrangeElement(degree, continuous=False)
    rule = triangle_rule(quad_degree or 2 * degree + 8)
    phi, _ = el.evaluate(rule.xi)
    X = mesh.map_points(rule.xi)
    F = func(X).reshape(mesh.n_cells, len(rule.weights), ncomp)
    Mref = np.einsum("aq,bq,q->ab", phi, phi, rule.weights)
    rhs = np.einsum("aq,cqi,q->cai", phi, F, rule.weights)
    coef = np.linalg.solve(Mref, rhs.transpose(1, 0, 2).reshape(el.ndofs, -1)).reshape(el.ndofs, mesh.n_cells, ncomp)
    coef = coef.transpose(1, 0, 2)

    def evaluate(xi):
        v, _ = el.evaluate(xi)
        return np.einsum("bq,cbi->cqi", v, coef)

    return evaluate


def weak_trace_residual(sol: SolutionBundle, chunk: int = 512) -> float:
    """Largest moment of tr D against the multiplier test functions, relative to ||D||.

    Zero up to rounding when the weak trace-free constraint is satisfied.
    """
    if "V" not in sol.spaces.fields:
        raise FormulationSpaceMismatch("weak trace residual needs the WeakDeviatoric formulation")
    mesh = sol.spaces.mesh
    rule = triangle_rule(2 * sol.spaces.degree + 2)
    moments = np.zeros(sol.spaces.fields["V"].ndofs)
    offset = sol.spaces.offsets["V"]
    for start in range(0, mesh.n_cells, chunk):
        cells = np.arange(start, min(start + chunk, mesh.n_cells))
        tab = tabulate_cells(sol.spaces, cells, rule.xi)
        d = np.einsum("cbqij,cb->cqij", tab["D"]["val"], sol.coefficients[tab["D"]["dofs"]])
        trd = d[..., 0, 0] + d[..., 1, 1]
        wts = rule.weights[None] * np.abs(tab["_det"])[:, None]
        loc = np.einsum("cbq,cq->cb", tab["V"]["val"], trd * wts)
        np.add.at(moments, tab["V"]["dofs"] - offset, loc)
    scale = field_norms(sol)["D"]
    return float(np.abs(moments).max() / max(scale, 1e-300))
