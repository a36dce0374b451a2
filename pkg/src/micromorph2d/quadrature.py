"""Gauss quadrature on the reference triangle and on the unit interval."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle (0,0), (1,0), (0,1).

    ``points`` holds barycentric triples (l0, l1, l2) with
    ``(xi, eta) = (l1, l2)``; the weights sum to the reference area 1/2.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def xi(self) -> np.ndarray:
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Collapsed Gauss rule exact for polynomials of total degree ``degree``.

    Gauss-Legendre in the collapsed direction times Gauss-Jacobi(1, 0) in the
    other absorbs the Duffy Jacobian, so n points per direction integrate
    degree 2n - 1 exactly.
    """
    n = max(1, (degree + 2) // 2)
    r, wr = np.polynomial.legendre.leggauss(n)
    s, ws = roots_jacobi(n, 1.0, 0.0)
    # map r to [0, 1] and s to the collapsed coordinate eta in [0, 1]
    a = (r + 1) / 2
    eta = (1 + s) / 2
    A, E = np.meshgrid(a, eta, indexing="ij")
    WA, WE = np.meshgrid(wr / 2, ws / 4, indexing="ij")
    xi = (A * (1 - E)).ravel()
    et = E.ravel()
    w = (WA * WE).ravel()
    pts = np.column_stack([1 - xi - et, xi, et])
    return QuadratureRule(pts, w, 2 * n - 1)


@lru_cache(maxsize=None)
def interval_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1], exact to ``degree``."""
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) / 2, w / 2
