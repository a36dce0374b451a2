"""Numerical property checks of the element families."""
from __future__ import annotations

import numpy as np

from .elements import REF_VERTICES, DeviatoricElement, LagrangeElement, NedelecIIElement, dimension_deviatoric
from .mesh import Mesh, square_mesh
from .quadrature import triangle_rule
from .spaces import build_space, evaluate_tensor_field, interpolate_y


def smooth_deviatoric_field():
    """A non-polynomial trace-free field and its exact row-wise curl."""

    def value(X):
        x, y = X[..., 0], X[..., 1]
        a = np.sin(x) * np.sin(y)
        b = np.cos(x) * np.exp(y / 3)
        c = np.sin(x + 2 * y)
        return np.stack([np.stack([a, b], -1), np.stack([c, -a], -1)], -2)

    def curl(X):
        x, y = X[..., 0], X[..., 1]
        bx = -np.sin(x) * np.exp(y / 3)
        ay = np.sin(x) * np.cos(y)
        ax = np.cos(x) * np.sin(y)
        cy = 2 * np.cos(x + 2 * y)
        return np.stack([bx - ay, -ax - cy], -1)

    return value, curl


def random_reference_points(rng, n: int) -> np.ndarray:
    u = rng.uniform(size=(n, 2))
    flip = u.sum(axis=1) > 1
    u[flip] = 1 - u[flip]
    return 0.02 + 0.96 * u


def random_jacobian(rng, min_quality: float = 0.1) -> np.ndarray:
    while True:
        J = rng.uniform(-2, 2, size=(2, 2))
        det = np.linalg.det(J)
        if det > min_quality * max(np.linalg.norm(J[:, 0]), np.linalg.norm(J[:, 1]),
                                   np.linalg.norm(J[:, 1] - J[:, 0])) ** 2:
            return J


def dimension_report(p: int) -> dict:
    y = DeviatoricElement(p)
    n = NedelecIIElement(p)
    return {
        "dim_deviatoric": y.ndofs,
        "dim_deviatoric_formula": dimension_deviatoric(p),
        "dim_deviatoric_full_sl2": 3 * (p + 1) * (p + 2) // 2,
        "dim_nedelec": n.ndofs,
        "dim_nedelec_formula": 2 * (p + 1) * (p + 2),
        "dim_cg": LagrangeElement(p, True).ndofs,
        "dim_dg": LagrangeElement(p, False).ndofs,
    }


def vandermonde(family: str, p: int, xi: np.ndarray, J: np.ndarray | None = None) -> np.ndarray:
    """Basis values stacked as columns: rows are (point, component)."""
    J = np.eye(2)[None] if J is None else J[None]
    if family == "DeviatoricY":
        vals, _ = DeviatoricElement(p).physical(J, xi)
    elif family == "NedelecII":
        vals, _ = NedelecIIElement(p).physical(J, xi)
    else:
        vals, _ = LagrangeElement(p, family == "LagrangeCG").physical(J, xi)
        return vals.T  # scalar values are shared by all cells: (nd, nq)
    v = vals[0]
    return v.reshape(v.shape[0], -1).T


def rank_report(p: int, rng) -> dict:
    out = {}
    for family in ("DeviatoricY", "NedelecII", "LagrangeCG", "LagrangeDG"):
        xi = random_reference_points(rng, 60)
        for tag, J in (("ref", None), ("phys", random_jacobian(rng))):
            V = vandermonde(family, p, xi, J)
            s = np.linalg.svd(V, compute_uv=False)
            out[f"rank_{family}_{tag}"] = int((s > 1e-12 * s[0]).sum())
            out[f"cond_{family}_{tag}"] = float(s[0] / s[-1])
        out[f"ndofs_{family}"] = V.shape[1]
    return out


def trace_max(p: int, rng, cells: int = 20) -> float:
    el = DeviatoricElement(p)
    xi = random_reference_points(rng, 30)
    Js = np.concatenate([np.eye(2)[None], np.array([random_jacobian(rng) for _ in range(cells)])])
    vals, _ = el.physical(Js, xi)
    return float(np.abs(vals[..., 0, 0] + vals[..., 1, 1]).max())


def two_cell_patch(rng) -> Mesh:
    """Two random triangles sharing the edge between vertices 0 and 1."""
    while True:
        a, b = rng.uniform(-1, 1, size=(2, 2))
        t = b - a
        length = np.linalg.norm(t)
        if length < 0.2:
            continue
        n = np.array([-t[1], t[0]]) / length
        c = a + rng.uniform(0.1, 0.9) * t + rng.uniform(0.2, 1.5) * length * n
        d = a + rng.uniform(0.1, 0.9) * t - rng.uniform(0.2, 1.5) * length * n
        verts = np.array([a, b, c, d])
        return Mesh.from_arrays(verts, np.array([[0, 1, 2], [1, 0, 3]]), default_tag=None)


def _edge_values(space, coef, cell: int, ga: int, gb: int, s: np.ndarray) -> np.ndarray:
    """Field values along the edge ga -> gb of ``cell``, at exact reference points."""
    mesh = space.mesh
    local = list(mesh.cells[cell])
    xi = (1 - s)[:, None] * REF_VERTICES[local.index(ga)] + s[:, None] * REF_VERTICES[local.index(gb)]
    vals, _ = space.element.physical(mesh.jacobians()[cell][None], xi)
    loc = coef[space.cell_dofs[cell]] * space.cell_signs[cell]
    return np.einsum("b,bqij->qij", loc, vals[0])


def tangential_continuity(family: str, p: int, patches: int, rng) -> float:
    """Worst relative tangential-trace mismatch on the shared edge of random patches."""
    worst = 0.0
    s = np.linspace(0.05, 0.95, 7)
    for _ in range(patches):
        mesh = two_cell_patch(rng)
        space = build_space(mesh, family, p)
        coef = rng.standard_normal(space.ndofs)
        t = mesh.vertices[1] - mesh.vertices[0]
        y0 = _edge_values(space, coef, 0, 0, 1, s) @ t
        y1 = _edge_values(space, coef, 1, 0, 1, s) @ t
        scale = max(np.abs(y0).max(), np.abs(y1).max(), 1e-300)
        worst = max(worst, float(np.abs(y0 - y1).max() / scale))
    return worst


def interpolation_errors(p: int, n: int, half_width: float = 1.0) -> dict:
    """L2 errors of the deviatoric interpolant, of its curl, and the commuting defect."""
    from .system import l2_project_dg

    value, curl = smooth_deviatoric_field()
    mesh = square_mesh(half_width, n)
    space = build_space(mesh, "DeviatoricY", p)
    coef = interpolate_y(space, value)
    rule = triangle_rule(2 * p + 6)
    X = mesh.map_points(rule.xi)
    wts = rule.weights[None] * np.abs(np.linalg.det(mesh.jacobians()))[:, None]
    V, C = evaluate_tensor_field(space, coef, rule.xi)
    P = l2_project_dg(mesh, p - 1, curl)(rule.xi)
    return {
        "l2": float(np.sqrt((((V - value(X)) ** 2).sum(axis=(-1, -2)) * wts).sum())),
        "curl": float(np.sqrt((((C - curl(X)) ** 2).sum(-1) * wts).sum())),
        "commuting": float(np.sqrt((((C - P) ** 2).sum(-1) * wts).sum())),
    }


def interpolation_rates(p: int, meshes=(2, 4, 8, 16)) -> dict:
    """Observed rates between successive meshes: worst and best of each kind."""
    errs = [interpolation_errors(p, n) for n in meshes]
    out = {}
    for key in ("l2", "curl", "commuting"):
        e = np.array([d[key] for d in errs])
        r = np.log(e[:-1] / e[1:]) / np.log(np.array(meshes[1:]) / np.array(meshes[:-1]))
        out[f"rate_{key}_min"] = float(r.min())
        out[f"rate_{key}_max"] = float(r.max())
        out[f"rate_{key}_last"] = float(r[-1])
        out[f"error_{key}_finest"] = float(e[-1])
    return out
