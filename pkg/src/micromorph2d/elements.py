"""Reference-triangle element families and their affine push-forwards.

Reference vertices are (0,0), (1,0), (0,1) with barycentric coordinates
l0 = 1 - xi - eta, l1 = xi, l2 = eta.  Local edge k is opposite vertex k
and runs along ``LOCAL_EDGES[k]``.

Families
--------
``LagrangeElement``      nodal CG/DG scalars on equispaced nodes.
``DeviatoricElement``    trace-free tensors with continuous tangential trace,
                         built from barycentric bubbles times edge-adapted
                         constant tensors.
``NedelecIIElement``     full P^p vectors with tangential continuity,
                         used row-wise for 2x2 tensors.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.special import eval_jacobi

from .mesh import LOCAL_EDGES, DegenerateCell
from .quadrature import interval_rule, triangle_rule
from .tensorops import R

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REF_TANGENTS = np.array([REF_VERTICES[b] - REF_VERTICES[a] for a, b in LOCAL_EDGES])
# gradients of l0, l1, l2 on the reference triangle
BARY_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

# Cartesian basis of trace-free 2x2 tensors
DEV_TENSORS = np.array([[[1.0, 0.0], [0.0, -1.0]],
                        [[0.0, 1.0], [0.0, 0.0]],
                        [[0.0, 0.0], [1.0, 0.0]]])


def barycentric(xi: np.ndarray) -> np.ndarray:
    xi = np.atleast_2d(xi)
    return np.column_stack([1 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]])


def bary_monomials(exps: np.ndarray, xi: np.ndarray):
    """Values and reference gradients of l0^a l1^b l2^c.

    ``exps`` has shape (n, 3); returns arrays (n, nq) and (n, nq, 2).
    """
    lam = barycentric(xi)
    exps = np.asarray(exps)
    val = np.ones((len(exps), len(lam)))
    for k in range(3):
        val *= lam[None, :, k] ** exps[:, k, None]
    grad = np.zeros((len(exps), len(lam), 2))
    for k in range(3):
        e = exps[:, k, None]
        dk = e * lam[None, :, k] ** np.maximum(e - 1, 0)
        rest = np.ones_like(val)
        for j in range(3):
            if j != k:
                rest *= lam[None, :, j] ** exps[:, j, None]
        grad += (dk * rest)[..., None] * BARY_GRADS[k]
    return val, grad


def monomial_exponents(p: int) -> list:
    return [(i, d - i) for d in range(p + 1) for i in range(d, -1, -1)]


def monomials(p: int, xi: np.ndarray):
    """Values and gradients of xi^i eta^j for i + j <= p."""
    xi = np.atleast_2d(xi)
    x, y = xi[:, 0], xi[:, 1]
    exps = monomial_exponents(p)
    val = np.array([x**i * y**j for i, j in exps])
    dx = np.array([i * x ** max(i - 1, 0) * y**j for i, j in exps])
    dy = np.array([j * x**i * y ** max(j - 1, 0) for i, j in exps])
    return val, np.stack([dx, dy], axis=-1)


def orthogonal_polynomials(p: int, xi: np.ndarray):
    """L2-orthonormal Dubiner basis of P^p on the reference triangle.

    Same layout as :func:`monomials` (index by total degree).  The collapsed
    Legendre factor is evaluated through the scaled recurrence
    ``s^n P_n(x / s)`` so no division by ``1 - eta`` occurs.
    """
    xi = np.atleast_2d(xi)
    x1, y1 = xi[:, 0], xi[:, 1]
    nq = len(x1)
    xx = 2 * x1 + y1 - 1
    ss = 1 - y1
    dxx = np.array([2.0, 1.0])
    dss = np.array([0.0, -1.0])
    L = [np.ones(nq)]
    dL = [np.zeros((nq, 2))]
    if p >= 1:
        L.append(xx.copy())
        dL.append(np.broadcast_to(dxx, (nq, 2)).copy())
    for n in range(1, p):
        L.append(((2 * n + 1) * xx * L[n] - n * ss**2 * L[n - 1]) / (n + 1))
        dL.append(((2 * n + 1) * (dxx[None] * L[n][:, None] + xx[:, None] * dL[n])
                   - n * (2 * ss[:, None] * dss[None] * L[n - 1][:, None] + (ss**2)[:, None] * dL[n - 1]))
                  / (n + 1))
    b = 2 * y1 - 1
    vals, grads = [], []
    for i, j in monomial_exponents(p):
        # degree d = i + j, with i the Legendre index and j the Jacobi index
        a_idx, j_idx = j, i
        alpha = 2 * a_idx + 1
        Pj = eval_jacobi(j_idx, alpha, 0, b)
        dPj = 0.5 * (j_idx + alpha + 1) * eval_jacobi(j_idx - 1, alpha + 1, 1, b) * 2 if j_idx > 0 else np.zeros(nq)
        scale = np.sqrt(2.0 * (2 * a_idx + 1) * (a_idx + j_idx + 1))
        vals.append(scale * L[a_idx] * Pj)
        grads.append(scale * (dL[a_idx] * Pj[:, None]
                              + L[a_idx][:, None] * np.stack([np.zeros(nq), dPj], axis=-1)))
    return np.array(vals), np.array(grads)


def inverse_transpose(J: np.ndarray):
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    scale = np.abs(J).max(axis=(-1, -2)) ** 2
    if np.any(np.abs(det) <= 1e-14 * scale) or np.any(scale == 0):
        raise DegenerateCell("zero-area cell in push-forward")
    inv_t = np.empty_like(J)
    inv_t[..., 0, 0] = J[..., 1, 1]
    inv_t[..., 0, 1] = -J[..., 1, 0]
    inv_t[..., 1, 0] = -J[..., 0, 1]
    inv_t[..., 1, 1] = J[..., 0, 0]
    return inv_t / det[..., None, None], det


@dataclass
class ElementTabulation:
    """Basis values at reference or physical points.

    ``values`` has shape (ndofs, nq) for scalars, (ndofs, nq, 2) for vectors
    and (ndofs, nq, 2, 2) for tensors.  ``curls`` is (ndofs, nq, 2) for
    tensor families and (ndofs, nq) for vector families; ``grads`` is set
    for scalar families.  ``dof_polytope[i] = (dim, entity, local)``.
    """

    family: str
    degree: int
    ndofs: int
    points: np.ndarray
    values: np.ndarray
    curls: np.ndarray | None = None
    grads: np.ndarray | None = None
    dof_polytope: list | None = None


# --- Lagrange ---------------------------------------------------------------

class LagrangeElement:
    def __init__(self, p: int, continuous: bool = True):
        if p < (1 if continuous else 0):
            raise ValueError(f"unsupported Lagrange degree {p}")
        self.p = p
        self.continuous = continuous
        self.family = "LagrangeCG" if continuous else "LagrangeDG"
        self.nodes, self.dof_polytope = self._nodes(p)
        self.ndofs = len(self.nodes)
        val, _ = orthogonal_polynomials(p, self.nodes)
        self._coef = np.linalg.inv(val).T  # rows: monomials, cols: nodal basis

    @staticmethod
    def _nodes(p):
        if p == 0:
            return np.array([[1 / 3, 1 / 3]]), [(2, 0, 0)]
        nodes, poly = [], []
        for v in range(3):
            nodes.append(REF_VERTICES[v])
            poly.append((0, v, 0))
        for k, (a, b) in enumerate(LOCAL_EDGES):
            for j in range(1, p):
                nodes.append(REF_VERTICES[a] + j / p * (REF_VERTICES[b] - REF_VERTICES[a]))
                poly.append((1, k, j - 1))
        n = 0
        for j in range(1, p):
            for i in range(1, p - j):
                nodes.append(np.array([i / p, j / p]))
                poly.append((2, 0, n))
                n += 1
        return np.array(nodes), poly

    def evaluate(self, xi):
        val, grad = orthogonal_polynomials(self.p, xi)
        return self._coef.T @ val, np.einsum("mb,mqd->bqd", self._coef, grad)

    def tabulate(self, xi) -> ElementTabulation:
        v, g = self.evaluate(xi)
        return ElementTabulation(self.family, self.p, self.ndofs, np.atleast_2d(xi), v,
                                 grads=g, dof_polytope=self.dof_polytope)

    def physical(self, J: np.ndarray, xi):
        """Values (nd, nq) and physical gradients (c, nd, nq, 2)."""
        v, g = self.evaluate(xi)
        jit, _ = inverse_transpose(J)
        return v, np.einsum("cij,bqj->cbqi", jit, g)


# --- strongly deviatoric element --------------------------------------------

def edge_frames(J: np.ndarray):
    """Physical tangents t = J tau and normals n = R t of the local edges.

    Returns arrays of shape (c, 3, 2).
    """
    t = np.einsum("cij,kj->cki", J, REF_TANGENTS)
    return t, np.einsum("ij,ckj->cki", R, t)


class DeviatoricElement:
    """Trace-free tensor element of degree p with tangential continuity.

    Basis layout: 3 Cartesian vertex functions per vertex, then per local
    edge the two tangential families, then per local edge the edge-cell
    family, then the interior bubbles.  Edge bubbles are l_a^q l_b^(p-q)
    with (a, b) the local edge direction, q = 1..p-1.
    """

    family = "DeviatoricY"

    def __init__(self, p: int):
        if p < 1:
            raise ValueError(f"unsupported deviatoric degree {p}")
        self.p = p
        exps, kinds, poly = [], [], []
        for v in range(3):
            e = [0, 0, 0]
            e[v] = 1
            for k in range(3):
                exps.append(e)
                kinds.append(("cart", k))
                poly.append((0, v, k))
        bubbles = []
        for (a, b) in LOCAL_EDGES:
            row = []
            for q in range(1, p):
                e = [0, 0, 0]
                e[a], e[b] = q, p - q
                row.append(e)
            bubbles.append(row)
        self.edge_bubbles = bubbles
        for k in range(3):
            for fam in (0, 1):
                for j, e in enumerate(bubbles[k]):
                    exps.append(e)
                    kinds.append(("edge", k, fam))
                    poly.append((1, k, fam * (p - 1) + j))
        for k in range(3):
            for j, e in enumerate(bubbles[k]):
                exps.append(e)
                kinds.append(("edgecell", k))
                poly.append((2, 0, k * (p - 1) + j))
        self.interior_exps = [(q, r, p - q - r) for q in range(1, p) for r in range(1, p - q)]
        n = 3 * (p - 1)
        for e in self.interior_exps:
            for k in range(3):
                exps.append(list(e))
                kinds.append(("cart", k))
                poly.append((2, 0, n))
                n += 1
        self.exps = np.array(exps, dtype=int).reshape(-1, 3)
        self.kinds = kinds
        self.dof_polytope = poly
        self.ndofs = len(kinds)
        assert self.ndofs == dimension_deviatoric(p)
        # index helpers
        self.vertex_dofs = np.arange(9).reshape(3, 3)
        self.edge_dofs = (9 + np.arange(6 * (p - 1))).reshape(3, 2, p - 1)
        self.edgecell_dofs = (9 + 6 * (p - 1) + np.arange(3 * (p - 1))).reshape(3, p - 1)
        self.cell_dofs = 9 + 9 * (p - 1) + np.arange(3 * len(self.interior_exps))

    def tensors(self, J: np.ndarray) -> np.ndarray:
        """Constant tensor factor of each basis function, shape (c, nd, 2, 2)."""
        t, n = edge_frames(J)
        fam = [np.einsum("cki,ckj->ckij", t, t) - np.einsum("cki,ckj->ckij", n, n),
               np.einsum("cki,ckj->ckij", n, t)]
        ec = np.einsum("cki,ckj->ckij", t, n)
        out = np.empty((len(J), self.ndofs, 2, 2))
        for i, kd in enumerate(self.kinds):
            if kd[0] == "cart":
                out[:, i] = DEV_TENSORS[kd[1]]
            elif kd[0] == "edge":
                out[:, i] = fam[kd[2]][:, kd[1]]
            else:
                out[:, i] = ec[:, kd[1]]
        return out

    def physical(self, J: np.ndarray, xi):
        """Physical values (c, nd, nq, 2, 2) and curls (c, nd, nq, 2)."""
        phi, gref = bary_monomials(self.exps, xi)
        jit, _ = inverse_transpose(J)
        grad = np.einsum("cij,bqj->cbqi", jit, gref)
        A = self.tensors(J)
        vals = phi[None, :, :, None, None] * A[:, :, None]
        # Curl(phi A) = A R^T grad(phi)
        rtg = np.stack([-grad[..., 1], grad[..., 0]], axis=-1)
        curls = np.einsum("cbij,cbqj->cbqi", A, rtg)
        return vals, curls

    def tabulate(self, xi) -> ElementTabulation:
        v, c = self.physical(np.eye(2)[None], xi)
        return ElementTabulation(self.family, self.p, self.ndofs, np.atleast_2d(xi), v[0], curls=c[0],
                                 dof_polytope=self.dof_polytope)

    # --- interpolation functionals -----------------------------------------
    def functionals(self, J: np.ndarray, x0: np.ndarray, field, quad_degree: int | None = None):
        """Apply the interpolation functionals to ``field`` on each cell.

        ``field`` maps points (..., 2) to tensors (..., 2, 2).  Returns an
        array (c, nd) whose entries are ordered like the basis.
        """
        p = self.p
        c = len(J)
        out = np.zeros((c, self.ndofs))
        xv = x0[:, None, :] + np.einsum("cij,vj->cvi", J, REF_VERTICES)
        Fv = field(xv)
        out[:, :9] = np.stack([Fv[..., 0, 0], Fv[..., 0, 1], Fv[..., 1, 0]], axis=-1).reshape(c, 9)
        deg = quad_degree or 2 * p + 4
        if p >= 2:
            s, w = interval_rule(deg)
            leg = _legendre01(p - 2, s)  # (p-1, ns)
            t, n = edge_frames(J)
            for k, (a, b) in enumerate(LOCAL_EDGES):
                xi = REF_VERTICES[a] + s[:, None] * (REF_VERTICES[b] - REF_VERTICES[a])
                X = x0[:, None, :] + np.einsum("cij,qj->cqi", J, xi)
                F = field(X)  # (c, ns, 2, 2)
                tt = np.einsum("cqij,ci,cj->cq", F, t[:, k], t[:, k]) - np.einsum("cqij,ci,cj->cq", F, n[:, k], n[:, k])
                nt = np.einsum("cqij,ci,cj->cq", F, n[:, k], t[:, k])
                tn = np.einsum("cqij,ci,cj->cq", F, t[:, k], n[:, k])
                for fam, g in enumerate((tt, nt)):
                    out[:, self.edge_dofs[k, fam]] = np.einsum("cq,mq,q->cm", g, leg, w)
                out[:, self.edgecell_dofs[k]] = np.einsum("cq,mq,q->cm", tn, leg, w)
        if p >= 3:
            rule = triangle_rule(deg)
            X = x0[:, None, :] + np.einsum("cij,qj->cqi", J, rule.xi)
            F = field(X)
            qv, _ = monomials(p - 3, rule.xi)
            comps = np.einsum("cqij,kij->cqk", F, DEV_TENSORS)
            out[:, self.cell_dofs] = np.einsum("cqk,mq,q->cmk", comps, qv, rule.weights).reshape(c, -1)
        return out

    def functional_matrix(self, J: np.ndarray) -> np.ndarray:
        """Functionals applied to the basis, shape (c, nd_functional, nd_basis)."""
        c = len(J)
        mats = np.empty((c, self.ndofs, self.ndofs))
        x0 = np.zeros((c, 2))
        for b in range(self.ndofs):
            def basis_field(X, b=b):
                xi = np.einsum("cij,c...j->c...i", np.linalg.inv(J), X)
                shp = xi.shape
                phi, _ = bary_monomials(self.exps[b:b + 1], xi.reshape(-1, 2))
                A = self.tensors(J)[:, b]
                phi = phi.reshape(shp[:-1])
                return phi[..., None, None] * A.reshape((c,) + (1,) * (len(shp) - 2) + (2, 2))
            mats[:, :, b] = self.functionals(J, x0, basis_field)
        return mats


def _legendre01(m: int, s: np.ndarray) -> np.ndarray:
    """Scaled Legendre polynomials sqrt(2k+1) P_k(2s-1), k = 0..m."""
    out = np.empty((m + 1, len(s)))
    for k in range(m + 1):
        c = np.zeros(k + 1)
        c[k] = 1
        out[k] = np.sqrt(2 * k + 1) * np.polynomial.legendre.legval(2 * s - 1, c)
    return out


def dimension_deviatoric(p: int) -> int:
    return 9 + 6 * (p - 1) + 3 * (p - 1) + 3 * (p - 2) * (p - 1) // 2


# --- Nedelec second kind ----------------------------------------------------

class NedelecIIElement:
    """Full P^p vector element with tangential continuity.

    Dofs: tangential moments against scaled Legendre polynomials on each
    edge (p+1 per edge), then interior moments against RT_{p-2}.
    Vector basis functions follow the covariant map v = J^-T v_ref.
    """

    family = "NedelecII"

    def __init__(self, p: int):
        if p < 1:
            raise ValueError(f"unsupported Nedelec degree {p}")
        self.p = p
        self.nmono = (p + 1) * (p + 2) // 2
        self.nvec = 2 * self.nmono
        self._select, self._coef, self.vec_polytope = _nedelec2_dual(p)
        # row-wise tensor layout: index r * nvec + b
        self.ndofs = 2 * self.nvec
        self.dof_polytope = [(d, e, r * 1000 + l) for r in range(2) for (d, e, l) in self.vec_polytope]
        self.edge_moment_sign = np.array([(-1) ** (m + 1) for m in range(p + 1)])

    def evaluate_vector(self, xi):
        """Reference vector values (nvec, nq, 2) and curls (nvec, nq)."""
        cand, ccurl = _nedelec2_candidates(self.p, xi, self._select)
        v = np.einsum("cb,cqi->bqi", self._coef, cand)
        return v, self._coef.T @ ccurl

    def physical_vector(self, J: np.ndarray, xi):
        v, curl = self.evaluate_vector(xi)
        jit, det = inverse_transpose(J)
        return np.einsum("cij,bqj->cbqi", jit, v), curl[None] / det[:, None, None]

    def physical(self, J: np.ndarray, xi):
        """Row-wise tensor values (c, nd, nq, 2, 2) and curls (c, nd, nq, 2)."""
        v, curl = self.physical_vector(J, xi)
        c, nb, nq = curl.shape
        vals = np.zeros((c, 2, nb, nq, 2, 2))
        curls = np.zeros((c, 2, nb, nq, 2))
        for r in range(2):
            vals[:, r, :, :, r, :] = v
            curls[:, r, :, :, r] = curl
        return vals.reshape(c, 2 * nb, nq, 2, 2), curls.reshape(c, 2 * nb, nq, 2)

    def tabulate(self, xi) -> ElementTabulation:
        v, c = self.physical(np.eye(2)[None], xi)
        return ElementTabulation(self.family, self.p, self.ndofs, np.atleast_2d(xi), v[0], curls=c[0],
                                 dof_polytope=self.dof_polytope)

    def tabulate_vector(self, xi) -> ElementTabulation:
        v, c = self.evaluate_vector(xi)
        return ElementTabulation(self.family, self.p, self.nvec, np.atleast_2d(xi), v, curls=c,
                                 dof_polytope=self.vec_polytope)


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _legendre_on(j: int, t: np.ndarray):
    c = np.zeros(j + 1)
    c[j] = 1
    return np.polynomial.legendre.legval(t, c), np.polynomial.legendre.legval(t, np.polynomial.legendre.legder(c))


def _nedelec2_candidates(p: int, xi: np.ndarray, select=None):
    """Hierarchical spanning set of P^p vector fields, evaluated from barycentrics.

    Per edge (a, b): Whitney form times Legendre polynomials in l_b - l_a up to
    degree p-1, plus the gradient of one edge bubble of degree p+1.  Interior:
    l_a l_b grad(l_c) times homogeneous monomials of degree p-2.  Every
    function except those of edge k has identically zero tangential trace on
    edge k, which keeps inter-element continuity free of cancellation.
    Returns values (n, nq, 2), curls (n, nq) and, without ``select``, group tags.
    """
    xi = np.atleast_2d(xi)
    lam = np.stack([1 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]])
    g = BARY_GRADS
    vals, curls, tags = [], [], []
    for k, (a, b) in enumerate(LOCAL_EDGES):
        t = lam[b] - lam[a]
        dt = g[b] - g[a]
        w = lam[a][:, None] * g[b] - lam[b][:, None] * g[a]
        cw = 2 * _cross(g[a], g[b])
        for j in range(p):
            q, dq = _legendre_on(j, t)
            vals.append(q[:, None] * w)
            curls.append(q * cw + dq * _cross(dt, w))
            tags.append(("edge", k))
        q, dq = _legendre_on(p - 1, t)
        vals.append(q[:, None] * (lam[b][:, None] * g[a] + lam[a][:, None] * g[b])
                    + (lam[a] * lam[b] * dq)[:, None] * dt)
        curls.append(np.zeros(len(t)))
        tags.append(("edge", k))
    if p >= 2:
        powers = [(i, j, p - 2 - i - j) for i in range(p - 1) for j in range(p - 1 - i)]
        for c in range(3):
            a, b = [i for i in range(3) if i != c]
            for e in powers:
                e = np.array(e)
                e[a] += 1
                e[b] += 1
                f = np.prod([lam[i] ** e[i] for i in range(3)], axis=0)
                grad = np.zeros((len(f), 2))
                for i in range(3):
                    if e[i]:
                        d = e.copy()
                        d[i] -= 1
                        grad += (e[i] * np.prod([lam[m] ** d[m] for m in range(3)], axis=0))[:, None] * g[i]
                vals.append(f[:, None] * g[c])
                curls.append(_cross(grad, g[c]))
                tags.append(("interior", 0))
    vals, curls = np.array(vals), np.array(curls)
    if select is not None:
        return vals[select], curls[select]
    return vals, curls, tags


def _nedelec2_functionals(p: int):
    """Functional matrix applied to all candidates, rows in dof order."""
    rows, poly = [], []
    s, w = interval_rule(2 * p + 2)
    leg = _legendre01(p, s)
    for k, (a, b) in enumerate(LOCAL_EDGES):
        tau = REF_TANGENTS[k]
        vals, _, _ = _nedelec2_candidates(p, REF_VERTICES[a] + s[:, None] * tau)
        vt = vals @ tau
        for m in range(p + 1):
            rows.append(vt @ (leg[m] * w))
            poly.append((1, k, m))
    if p >= 2:
        rule = triangle_rule(2 * p)
        vals, _, _ = _nedelec2_candidates(p, rule.xi)
        qv, _ = monomials(p - 2, rule.xi)
        tests = []
        for j in range(len(qv)):
            tests.append((qv[j], 0 * qv[j]))
            tests.append((0 * qv[j], qv[j]))
        nlow = (p - 2) * (p - 1) // 2  # monomials of degree <= p-3
        for j in range(nlow, len(qv)):
            tests.append((rule.xi[:, 0] * qv[j], rule.xi[:, 1] * qv[j]))
        for n, (wx, wy) in enumerate(tests):
            rows.append((vals[..., 0] * wx + vals[..., 1] * wy) @ rule.weights)
            poly.append((2, 0, n))
    return np.array(rows), poly


@lru_cache(maxsize=None)
def _nedelec2_dual(p: int):
    """Candidate selection and dual coefficients (candidates x dofs).

    The functional matrix is block lower triangular (edge functionals vanish
    on the other edges' and on the interior candidates); it is inverted block
    by block so that those zeros survive exactly in the coefficients.
    """
    mat, poly = _nedelec2_functionals(p)
    _, _, tags = _nedelec2_candidates(p, REF_VERTICES[:1])
    tags = np.array([k if kind == "edge" else -1 for kind, k in tags])
    ne = 3 * (p + 1)
    interior = np.flatnonzero(tags < 0)
    select = list(range(ne))
    if p >= 2:
        ni = mat.shape[0] - ne
        _, _, piv = scipy.linalg.qr(mat[ne:, interior], pivoting=True, mode="economic")
        select += sorted(interior[piv[:ni]].tolist())
    select = np.array(select)
    m = mat[:, select]
    n = len(select)
    coef = np.zeros((n, n))
    for k in range(3):
        blk = slice(k * (p + 1), (k + 1) * (p + 1))
        coef[blk, blk] = np.linalg.inv(m[blk, blk])
    if p >= 2:
        dinv = np.linalg.inv(m[ne:, ne:])
        coef[ne:, ne:] = dinv
        coef[ne:, :ne] = -dinv @ m[ne:, :ne] @ coef[:ne, :ne]
    assert n == mat.shape[0]
    return select, coef, poly


# --- generic helpers --------------------------------------------------------

def lagrange_basis(p: int, continuous: bool = True, points=None) -> ElementTabulation:
    el = LagrangeElement(p, continuous)
    pts = triangle_rule(2 * p + 2).xi if points is None else points
    return el.tabulate(pts)


def deviatoric_basis(p: int, points=None) -> ElementTabulation:
    el = DeviatoricElement(p)
    pts = triangle_rule(2 * p + 2).xi if points is None else points
    return el.tabulate(pts)


def nedelec2_basis(p: int, points=None) -> ElementTabulation:
    el = NedelecIIElement(p)
    pts = triangle_rule(2 * p + 2).xi if points is None else points
    return el.tabulate(pts)


_ELEMENTS = {
    "LagrangeCG": lambda p: LagrangeElement(p, True),
    "LagrangeDG": lambda p: LagrangeElement(p, False),
    "SphericalDG": lambda p: LagrangeElement(p, False),
    "DeviatoricY": DeviatoricElement,
    "NedelecII": NedelecIIElement,
}


def make_element(family: str, p: int):
    try:
        return _ELEMENTS[family](p)
    except KeyError:
        raise ValueError(f"unknown element family {family!r}") from None


def push_forward(tab: ElementTabulation, vertices: np.ndarray) -> ElementTabulation:
    """Map a reference tabulation to the physical triangle with given vertices."""
    vertices = np.asarray(vertices, float)
    J = np.column_stack([vertices[1] - vertices[0], vertices[2] - vertices[0]])[None]
    el = make_element(tab.family, tab.degree)
    if tab.family in ("LagrangeCG", "LagrangeDG", "SphericalDG"):
        v, g = el.physical(J, tab.points)
        return ElementTabulation(tab.family, tab.degree, tab.ndofs, tab.points, v, grads=g[0],
                                 dof_polytope=tab.dof_polytope)
    if tab.values.ndim == 3:  # vector Nedelec tabulation
        v, c = el.physical_vector(J, tab.points)
    else:
        v, c = el.physical(J, tab.points)
    return ElementTabulation(tab.family, tab.degree, tab.ndofs, tab.points, v[0], curls=c[0],
                             dof_polytope=tab.dof_polytope)


__all__ = [
    "ElementTabulation", "LagrangeElement", "DeviatoricElement", "NedelecIIElement",
    "lagrange_basis", "deviatoric_basis", "nedelec2_basis", "push_forward", "make_element",
    "dimension_deviatoric", "DEV_TENSORS", "REF_VERTICES", "bary_monomials", "monomials",
    "edge_frames",
]
