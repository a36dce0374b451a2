"""Direct solution of the assembled sparse symmetric systems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

PIVOT_TOL = 1e-14
RESIDUAL_TOL = 1e-10
DENSE_INERTIA_LIMIT = 3000


class SingularSystem(RuntimeError):
    def __init__(self, message: str, dof: int | None = None, polytope: str | None = None):
        super().__init__(message)
        self.dof = dof
        self.polytope = polytope


# (ordering, diagonal pivot threshold, symmetric mode): the first entry keeps
# the symmetric fill-reducing order with static diagonal pivots, the second
# falls back to column ordering with threshold partial pivoting.
STRATEGIES = (("MMD_AT_PLUS_A", 0.0, True), ("COLAMD", 0.1, False))


@dataclass
class Factorization:
    """Sparse LU factors of a diagonally scaled square matrix.

    ``inertia`` gives ``(positive, negative, zero)`` eigenvalue counts from a
    dense LDL^T factorization when the matrix has at most
    ``DENSE_INERTIA_LIMIT`` rows, else ``None``.
    """

    lu: object
    matrix: sp.csc_matrix
    scale: np.ndarray
    strategy: tuple = STRATEGIES[0]
    min_pivot: float = 0.0

    @property
    def permutation(self):
        return self.lu.perm_c

    @property
    def inertia(self):
        if self.matrix.shape[0] > DENSE_INERTIA_LIMIT:
            return None
        return inertia(self.matrix)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self.scale * self.lu.solve(self.scale * b)


def _equilibrate(A: sp.csc_matrix) -> np.ndarray:
    d = np.sqrt(np.abs(A.diagonal()))
    rowmax = np.sqrt(abs(A).max(axis=1).toarray().ravel())
    d = np.where(d > 0, d, rowmax)
    d[d == 0] = 1.0
    return 1.0 / d


def inertia(A) -> tuple:
    """Signature of a symmetric matrix from a dense Bunch-Kaufman LDL^T."""
    dense = A.toarray() if sp.issparse(A) else np.asarray(A, float)
    _, d, _ = sla.ldl(dense)
    ev = np.linalg.eigvalsh(d)
    tol = PIVOT_TOL * max(np.abs(dense).max(), 1e-300) * len(dense)
    return int((ev > tol).sum()), int((ev < -tol).sum()), int((np.abs(ev) <= tol).sum())


def factorize(A, describe=None, pivot_check: bool = True, strategy: tuple = STRATEGIES[-1]) -> Factorization:
    """Factor a square sparse matrix after symmetric diagonal scaling.

    ``describe(dof)`` may return a text naming the mesh entity of a dof; it
    is used in the :class:`SingularSystem` message.  With ``pivot_check``
    off, tiny pivots are accepted as they are.
    """
    A = sp.csc_matrix(A)
    s = _equilibrate(A)
    S = sp.diags(s)
    As = (S @ A @ S).tocsc()
    norm = abs(As).max()
    order, thresh, symmetric = strategy
    try:
        lu = spla.splu(As, permc_spec=order, diag_pivot_thresh=thresh,
                       options={"SymmetricMode": symmetric})
    except RuntimeError as exc:
        raise SingularSystem(f"factorization failed: {exc}") from None
    piv = np.abs(lu.U.diagonal())
    bad = np.flatnonzero(piv <= PIVOT_TOL * norm)
    if pivot_check and len(bad):
        col = int(lu.perm_c[bad[0]])
        where = describe(col) if describe else None
        msg = f"zero pivot at dof {col}" + (f" ({where})" if where else "")
        raise SingularSystem(msg, col, where)
    return Factorization(lu, A, s, strategy, float(piv.min() / norm) if len(piv) else 0.0)


def _refined(fac: Factorization, b: np.ndarray, steps: int) -> tuple:
    A = fac.matrix
    x = fac.solve(b)
    bn = np.linalg.norm(b)
    res = np.linalg.norm(b - A @ x) / bn
    for _ in range(steps):
        if res <= RESIDUAL_TOL * 1e-2 or not np.isfinite(res):
            break
        x_new = x + fac.solve(b - A @ x)
        res_new = np.linalg.norm(b - A @ x_new) / bn
        if not res_new < res:
            break
        x, res = x_new, res_new
    return x, res


def solve_sparse(A, b: np.ndarray, describe=None, refine: int = 4,
                 pivot_check: bool = True) -> np.ndarray:
    """Solve ``A x = b`` directly, with iterative refinement.

    The strategies in ``STRATEGIES`` are tried in order; a later one is used
    when an earlier one leaves a tiny pivot or a residual above
    ``RESIDUAL_TOL``.
    """
    b = np.asarray(b, float)
    if not np.any(b):
        return np.zeros_like(b)
    best = None
    for k, strategy in enumerate(STRATEGIES):
        last = k == len(STRATEGIES) - 1
        try:
            fac = factorize(A, describe, pivot_check and last, strategy)
        except SingularSystem:
            if last:
                raise
            continue
        if not last and pivot_check and fac.min_pivot <= PIVOT_TOL:
            continue
        x, res = _refined(fac, b, refine)
        if best is None or res < best[1]:
            best = (x, res)
        if res <= RESIDUAL_TOL:
            break
    return best[0]


def relative_residual(A, x, b) -> float:
    bn = np.linalg.norm(b)
    return float(np.linalg.norm(A @ x - b) / bn) if bn > 0 else float(np.linalg.norm(A @ x))


def solve(system, check: bool = True, spec=None):
    """Solve a constrained :class:`~micromorph2d.system.LinearSystem`.

    Returns a :class:`~micromorph2d.system.SolutionBundle`.  Raises
    :class:`SingularSystem` on a vanishing pivot and ``RuntimeError`` if the
    relative residual stays above the tolerance.  ``check=False`` disables
    both checks; the residual is still recorded on the result.  This is used
    to observe what an unstable discretization produces.
    """
    from .system import SolutionBundle

    describe = _describer(system.spaces)
    x = solve_sparse(system.matrix, system.rhs, describe, pivot_check=check)
    res = relative_residual(system.matrix, x, system.rhs)
    if check and res > RESIDUAL_TOL:
        raise RuntimeError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
    sol = SolutionBundle(system.spaces, x, spec)
    sol.residual = res
    return sol


def _describer(spaces):
    def describe(dof: int) -> str:
        for name, space in spaces.fields.items():
            off = spaces.offsets[name]
            if off <= dof < off + space.ndofs:
                loc = np.argwhere(space.cell_dofs == dof - off)
                if len(loc) == 0:
                    return f"field {name}, local dof {dof - off}"
                c, i = loc[0]
                el = space.element
                poly = getattr(el, "dof_polytope", None)
                i_el = i % len(poly) if poly else i
                dim, ent, _ = poly[i_el] if poly else (None, None, None)
                kind = {0: "vertex", 1: "edge", 2: "cell"}.get(dim, "entity")
                return f"field {name}, {kind} {ent} of cell {c}"
        for name, idx in spaces.extras.items():
            if idx == dof:
                return f"global constraint {name}"
        return "unknown"
    return describe
