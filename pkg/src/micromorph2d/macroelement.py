"""Clough-Tocher macro element for trace-free tensors with tangential continuity.

Each field is linear and sl(2)-valued on the three subcells of a barycentric
split.  The raw space has 27 coefficients; 12 tangential-jump conditions on the
internal edges leave 15 fields, fixed by 4 moments per outer edge and 3 cell
moments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elements import DEV_TENSORS
from .mesh import LOCAL_EDGES, CloughTocherSplit, DegenerateCell, split_triangle
from .quadrature import interval_rule, triangle_rule

RAW_DIM = 27
N_CONSTRAINTS = 12
MACRO_DIM = 15
CONDITION_LIMIT = 1e12


class UnisolvenceFailure(np.linalg.LinAlgError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


def _edge_tests(s: np.ndarray) -> np.ndarray:
    """Orthonormal P1 basis on [0, 1]: shape (2, len(s))."""
    return np.stack([np.ones_like(s), np.sqrt(3.0) * (2.0 * s - 1.0)])


def _subcell_barycentric(verts: np.ndarray, x: np.ndarray) -> np.ndarray:
    J = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    ref = np.linalg.solve(J, (x - verts[0]).T).T
    return np.column_stack([1.0 - ref.sum(axis=1), ref[:, 0], ref[:, 1]])


def _subcell_gradients(verts: np.ndarray) -> np.ndarray:
    J = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return ref @ np.linalg.inv(J)


class _RawSpace:
    """Piecewise-linear sl(2) fields; raw index ``9 * subcell + 3 * node + component``."""

    def __init__(self, split: CloughTocherSplit):
        self.split = split
        self.verts = [split.subcell_vertices(i) for i in range(3)]
        self.grads = [_subcell_gradients(v) for v in self.verts]

    def values(self, sub: int, x: np.ndarray) -> np.ndarray:
        """Raw basis values on subcell ``sub`` at points x: (27, nq, 2, 2)."""
        lam = _subcell_barycentric(self.verts[sub], x)
        out = np.zeros((RAW_DIM, len(x), 2, 2))
        for a in range(3):
            for m in range(3):
                out[9 * sub + 3 * a + m] = lam[:, a, None, None] * DEV_TENSORS[m]
        return out

    def curls(self, sub: int) -> np.ndarray:
        """Row-wise curl of each raw function on ``sub`` (constant): (27, 2)."""
        out = np.zeros((RAW_DIM, 2))
        g = self.grads[sub]
        for a in range(3):
            for m in range(3):
                M = DEV_TENSORS[m]
                out[9 * sub + 3 * a + m] = g[a, 0] * M[:, 1] - g[a, 1] * M[:, 0]
        return out

    def edge_moments(self, sub: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Moments int <v (x) t, Y> ds on segment a->b for v in an orthonormal [P1]^2 basis.

        Returns (4, 27): rows are (component 0, test 0), (0, 1), (1, 0), (1, 1).
        """
        s, w = interval_rule(4)
        length = np.linalg.norm(b - a)
        t = (b - a) / length
        x = a[None] + s[:, None] * (b - a)[None]
        Yt = np.einsum("rqij,j->rqi", self.values(sub, x), t)
        tests = _edge_tests(s)
        out = np.einsum("rqi,kq,q->ikr", Yt, tests, w * length)
        return out.reshape(4, RAW_DIM)


def _constraint_matrix(raw: _RawSpace) -> np.ndarray:
    split = raw.split
    rows = []
    for k, (i, j) in enumerate(split.internal_edges):
        a, b = split.points[i], split.points[j]
        left, right = [c for c in range(3) if c != k]
        rows.append(raw.edge_moments(left, a, b) - raw.edge_moments(right, a, b))
    return np.vstack(rows)


def _dof_matrix(raw: _RawSpace) -> np.ndarray:
    split = raw.split
    rows = []
    for k, (i, j) in enumerate(LOCAL_EDGES):
        rows.append(raw.edge_moments(k, split.points[i], split.points[j]))
    q = triangle_rule(2)
    cell = np.zeros((3, RAW_DIM))
    for sub in range(3):
        v = raw.verts[sub]
        x = q.points @ v
        area = abs(split.subcell_areas()[sub])
        vals = raw.values(sub, x)
        cell += np.einsum("mij,rqij,q->mr", DEV_TENSORS, vals, q.weights * area)
    rows.append(cell)
    return np.vstack(rows)


@dataclass
class MacroBasis:
    """Fifteen fields dual to the macro element functionals.

    ``coefficients[:, k]`` holds the raw coefficients of basis field ``k``.
    Functionals 0-11 are the outer-edge moments (edge-major, then vector
    component, then test function); 12-14 are the cell moments against the
    three Cartesian trace-free tensors.
    """

    split: CloughTocherSplit
    coefficients: np.ndarray
    nullspace: np.ndarray
    constraints: np.ndarray
    dof_matrix: np.ndarray
    condition: float
    constraint_rank: int

    @property
    def parent(self) -> int:
        return self.split.parent

    @property
    def dimension(self) -> int:
        return self.coefficients.shape[1]

    def raw(self) -> _RawSpace:
        return _RawSpace(self.split)

    def raw_coefficients(self, dofs: np.ndarray) -> np.ndarray:
        return self.coefficients @ np.asarray(dofs, float)

    def evaluate(self, sub: int, x: np.ndarray, dofs: np.ndarray) -> np.ndarray:
        """Field with the given functional values on subcell ``sub`` at points x."""
        x = np.atleast_2d(np.asarray(x, float))
        return np.einsum("r,rqij->qij", self.raw_coefficients(dofs), self.raw().values(sub, x))

    def curl(self, sub: int, dofs: np.ndarray) -> np.ndarray:
        return self.raw_coefficients(dofs) @ self.raw().curls(sub)

    def functionals(self, raw_coefficients: np.ndarray) -> np.ndarray:
        return self.dof_matrix @ raw_coefficients


def build_macro_basis(vertices, parent: int = -1) -> MacroBasis:
    """Build the dual basis of the macro element on one triangle."""
    x = np.asarray(vertices, float)
    d1, d2 = x[1] - x[0], x[2] - x[0]
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    diam = max(np.linalg.norm(x[i] - x[j]) for i, j in LOCAL_EDGES)
    if not np.isfinite(area) or abs(area) <= 1e-14 * diam**2:
        raise DegenerateCell(f"triangle area {area:.3e} is degenerate")
    split = split_triangle(x, parent)
    raw = _RawSpace(split)
    C = _constraint_matrix(raw)
    Q, Rf = np.linalg.qr(C.T, mode="complete")
    diag = np.abs(np.diag(Rf))
    rank = int((diag > 1e-12 * diag.max()).sum())
    if rank != N_CONSTRAINTS:
        raise UnisolvenceFailure(f"internal constraints have rank {rank}", np.inf)
    N = Q[:, N_CONSTRAINTS:]
    D = _dof_matrix(raw)
    G = D @ N
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise UnisolvenceFailure(f"dof matrix condition {cond:.3e} exceeds {CONDITION_LIMIT:g}", cond)
    coef = N @ np.linalg.inv(G)
    return MacroBasis(split, coef, N, C, D, cond, rank)


@dataclass
class MacroReport:
    dimension: int
    constraint_rank: int
    condition: float
    duality_error: float
    jump_residual: float
    trace_max: float
    zero_dof_residual: float
    stokes_residual: float
    outer_trace_fit_residual: float

    def ok(self) -> bool:
        return (self.dimension == MACRO_DIM and self.constraint_rank == N_CONSTRAINTS
                and self.duality_error <= 1e-10 and self.jump_residual <= 1e-12
                and self.trace_max <= 1e-12 and self.zero_dof_residual <= 1e-10
                and self.stokes_residual <= 1e-12 and self.outer_trace_fit_residual <= 1e-12)


def _sample_points(split: CloughTocherSplit, sub: int) -> np.ndarray:
    q = triangle_rule(4)
    return q.points @ split.subcell_vertices(sub)


def macro_kernel_check(basis: MacroBasis, samples: int = 5, seed: int = 0) -> MacroReport:
    """Numerical checks of the unisolvence argument on random fields of the space.

    Residuals are scaled by the size of the fields involved so that they are
    comparable across triangles of different size.
    """
    rng = np.random.default_rng(seed)
    raw = basis.raw()
    split = basis.split
    scale = max(np.abs(basis.coefficients).max(), 1.0)
    duality = float(np.abs(basis.dof_matrix @ basis.coefficients - np.eye(MACRO_DIM)).max())
    jump = float(np.abs(basis.constraints @ basis.coefficients).max() / scale)

    trace_max = zero_res = stokes = fit = 0.0
    s_fit = np.linspace(0.0, 1.0, 6)
    for _ in range(samples):
        field = basis.nullspace @ rng.standard_normal(basis.nullspace.shape[1])
        fmax = np.abs(field).max()
        remainder = field - basis.coefficients @ basis.functionals(field)
        for sub in range(3):
            x = _sample_points(split, sub)
            vals = np.einsum("r,rqij->qij", field, raw.values(sub, x))
            trace_max = max(trace_max, float(np.abs(vals[..., 0, 0] + vals[..., 1, 1]).max() / fmax))
            rem = np.einsum("r,rqij->qij", remainder, raw.values(sub, x))
            zero_res = max(zero_res, float(np.abs(rem).max() / fmax))
            stokes = max(stokes, _stokes_residual(raw, split, sub, field))
            i, j = LOCAL_EDGES[sub]
            a, b = split.points[i], split.points[j]
            t = (b - a) / np.linalg.norm(b - a)
            xe = a[None] + s_fit[:, None] * (b - a)[None]
            Yt = np.einsum("r,rqij,j->qi", field, raw.values(sub, xe), t)
            V = np.column_stack([np.ones_like(s_fit), s_fit])
            c, *_ = np.linalg.lstsq(V, Yt, rcond=None)
            fit = max(fit, float(np.abs(V @ c - Yt).max() / max(np.abs(Yt).max(), 1e-300)))
    return MacroReport(basis.dimension, basis.constraint_rank, basis.condition, duality, jump,
                       trace_max, zero_res, stokes, fit)


def _stokes_residual(raw: _RawSpace, split: CloughTocherSplit, sub: int, field: np.ndarray) -> float:
    """| int_T Curl Y dA - oint Y t ds | on one subcell, relative to the boundary term size."""
    verts = raw.verts[sub]
    d1, d2 = verts[1] - verts[0], verts[2] - verts[0]
    signed = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    area_term = abs(signed) * (field @ raw.curls(sub))
    s, w = interval_rule(4)
    order = [0, 1, 2] if signed > 0 else [0, 2, 1]
    ring = verts[order]
    boundary = np.zeros(2)
    size = 0.0
    for e in range(3):
        a, b = ring[e], ring[(e + 1) % 3]
        x = a[None] + s[:, None] * (b - a)[None]
        Yt = np.einsum("r,rqij,j->qi", field, raw.values(sub, x), b - a)
        boundary += w @ Yt
        size = max(size, float(np.abs(Yt).max()))
    return float(np.abs(area_term - boundary).max() / max(size, 1e-300))


def random_triangle(rng: np.random.Generator, min_quality: float = 0.05) -> np.ndarray:
    """Random triangle whose area is at least ``min_quality`` times the squared diameter."""
    while True:
        x = rng.uniform(-1.0, 1.0, size=(3, 2)) * rng.uniform(0.1, 10.0)
        d1, d2 = x[1] - x[0], x[2] - x[0]
        area = abs(d1[0] * d2[1] - d1[1] * d2[0]) / 2
        diam = max(np.linalg.norm(x[i] - x[j]) for i, j in LOCAL_EDGES)
        if area >= min_quality * diam**2:
            return x


def condition_survey(n: int = 100, seed: int = 0) -> list[dict]:
    """Condition numbers and check residuals on ``n`` random triangles."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n):
        tri = random_triangle(rng)
        rep = macro_kernel_check(build_macro_basis(tri), samples=2, seed=k)
        rows.append({"triangle": k, "condition": rep.condition, "duality_error": rep.duality_error,
                     "jump_residual": rep.jump_residual, "zero_dof_residual": rep.zero_dof_residual,
                     "stokes_residual": rep.stokes_residual, "ok": rep.ok()})
    return rows
