"""Pointwise 2x2 tensor algebra, planar curl conventions and isotropic laws.

Tensors are plain numpy arrays whose last two axes have shape ``(2, 2)``;
vectors have a trailing axis of length 2.  Every function broadcasts over
leading axes, so the same code handles a single tensor and a batch of
quadrature-point values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

#: planar rotation used in all curl conventions
R = np.array([[0.0, 1.0], [-1.0, 0.0]])
IDENTITY = np.eye(2)


class DegenerateHomogenization(ValueError):
    """Raised when a scale-transition formula has a non-positive denominator."""


def tr(m: np.ndarray) -> np.ndarray:
    return m[..., 0, 0] + m[..., 1, 1]


def sph(m: np.ndarray) -> np.ndarray:
    return 0.5 * tr(m)[..., None, None] * IDENTITY


def dev(m: np.ndarray) -> np.ndarray:
    return m - sph(m)


def sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def skw(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m - np.swapaxes(m, -1, -2))


def ddot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Frobenius product over the trailing 2x2 axes."""
    return np.einsum("...ij,...ij->...", a, b)


def rotate(v: np.ndarray) -> np.ndarray:
    """Apply R to vectors: R v = (v_y, -v_x)."""
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def rotate_t(v: np.ndarray) -> np.ndarray:
    """Apply R^T to vectors: R^T v = (-v_y, v_x)."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


# --- differential operators -------------------------------------------------
#
# Gradients are supplied explicitly.  For a vector field the gradient array
# ``g`` has ``g[..., i, k] = d v_i / d x_k``; for a tensor field
# ``g[..., i, j, k] = d P_ij / d x_k``.

def curl_vector(grad_v: np.ndarray) -> np.ndarray:
    """Scalar curl d_x v_y - d_y v_x of a planar vector field."""
    return grad_v[..., 1, 0] - grad_v[..., 0, 1]


def div_vector(grad_v: np.ndarray) -> np.ndarray:
    return grad_v[..., 0, 0] + grad_v[..., 1, 1]


def curl_tensor(grad_p: np.ndarray) -> np.ndarray:
    """Row-wise curl: component i is d_x P_i2 - d_y P_i1."""
    return grad_p[..., :, 1, 0] - grad_p[..., :, 0, 1]


def div_tensor(grad_p: np.ndarray) -> np.ndarray:
    """Row-wise divergence: component i is d_x P_i1 + d_y P_i2."""
    return grad_p[..., :, 0, 0] + grad_p[..., :, 1, 1]


def curl_tensor_2d(grad_p: Callable[[np.ndarray], np.ndarray], x) -> np.ndarray:
    """Evaluate the row-wise curl of a tensor field at ``x``.

    Parameters
    ----------
    grad_p : callable
        Exact derivative callback returning ``d P_ij / d x_k`` with shape
        ``(..., 2, 2, 2)`` for points of shape ``(..., 2)``.
    x : array_like
        Evaluation point(s).
    """
    return curl_tensor(np.asarray(grad_p(np.asarray(x, dtype=float))))


# --- constitutive laws -------------------------------------------------------

@dataclass(frozen=True)
class IsotropicLaw:
    """Planar isotropic fourth-order tensor  C S = 2 mu S + lam tr(S) 1."""

    mu: float
    lam: float

    @property
    def bulk(self) -> float:
        """Eigenvalue half on spherical tensors, i.e. mu + lam."""
        return self.mu + self.lam

    @property
    def positive_definite(self) -> bool:
        return self.mu > 0 and self.mu + self.lam > 0

    def scaled(self, factor: float) -> "IsotropicLaw":
        return IsotropicLaw(factor * self.mu, factor * self.lam)

    @classmethod
    def from_shear_bulk(cls, mu: float, bulk: float) -> "IsotropicLaw":
        return cls(mu, bulk - mu)


@dataclass(frozen=True)
class MaterialRegion:
    """Material data of one mesh region.

    ``ce`` and ``cm`` are the meso and micro laws, ``mu_c`` the Cosserat
    coupling modulus, ``mu_macro`` the macroscopic shear modulus weighting the
    curvature energy and ``lc`` the characteristic length.
    """

    ce: IsotropicLaw
    cm: IsotropicLaw
    mu_c: float = 0.0
    mu_macro: float = 1.0
    lc: float = 1.0

    def __post_init__(self):
        if self.mu_c < 0:
            raise ValueError(f"mu_c must be non-negative, got {self.mu_c}")
        if self.mu_macro <= 0:
            raise ValueError(f"mu_macro must be positive, got {self.mu_macro}")
        if self.lc < 0:
            raise ValueError(f"lc must be non-negative, got {self.lc}")

    @property
    def curvature_modulus(self) -> float:
        return self.mu_macro * self.lc**2


def apply_isotropic(law: IsotropicLaw, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return 2.0 * law.mu * s + law.lam * tr(s)[..., None, None] * IDENTITY


def homogenize_meso(mu_m: float, lambda_m: float, mu_M: float, lambda_M: float) -> IsotropicLaw:
    """Meso law that, in series with the micro law, yields the macro law."""
    kap_m = mu_m + lambda_m
    kap_M = mu_M + lambda_M
    if mu_m - mu_M <= 0 or kap_m - kap_M <= 0:
        raise DegenerateHomogenization(
            f"micro moduli must exceed macro moduli (mu: {mu_m} vs {mu_M}, "
            f"mu+lambda: {kap_m} vs {kap_M})")
    mu_e = mu_m * mu_M / (mu_m - mu_M)
    kap_e = kap_m * kap_M / (kap_m - kap_M)
    return IsotropicLaw.from_shear_bulk(mu_e, kap_e)


def macro_stiffness(ce: IsotropicLaw, cm: IsotropicLaw) -> IsotropicLaw:
    """Cm (Ce + Cm)^-1 Ce, evaluated separately on each eigenspace."""
    mu = cm.mu * ce.mu / (cm.mu + ce.mu)
    kap = cm.bulk * ce.bulk / (cm.bulk + ce.bulk)
    return IsotropicLaw.from_shear_bulk(mu, kap)


def spherical_microdistortion(ce: IsotropicLaw, cm: IsotropicLaw,
                              sym_du: np.ndarray, sph_m: np.ndarray) -> np.ndarray:
    """Spherical microdistortion balancing meso and micro stresses.

    Solves (Ce + Cm) I = sph M + sph(Ce sym Du) on spherical tensors, where
    both laws act as multiplication by 2(mu + lam).
    """
    rhs = tr(np.asarray(sph_m, float)) / 2 + 2 * ce.bulk * tr(np.asarray(sym_du, float)) / 2
    coeff = rhs / (2 * (ce.bulk + cm.bulk))
    return coeff[..., None, None] * IDENTITY
