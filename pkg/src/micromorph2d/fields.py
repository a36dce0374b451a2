"""Analytic vector fields with exact first and second derivatives."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class AnalyticField:
    """Planar vector field u(x) with ``grad[..., i, k] = d u_i / d x_k`` and
    ``hess[..., i, j, k] = d^2 u_i / d x_j d x_k``."""

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    name: str = "field"

    def __call__(self, x):
        return self.value(np.asarray(x, float))


def linear_field(A, b=(0.0, 0.0), name: str = "linear") -> AnalyticField:
    """u(x) = A x + b."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    return AnalyticField(
        value=lambda x: np.einsum("ij,...j->...i", A, x) + b,
        grad=lambda x: np.broadcast_to(A, np.shape(x)[:-1] + (2, 2)).copy(),
        hess=lambda x: np.zeros(np.shape(x)[:-1] + (2, 2, 2)),
        name=name,
    )


def zero_field() -> AnalyticField:
    return linear_field(np.zeros((2, 2)), name="zero")


def sine_field(amplitude: float = 0.25) -> AnalyticField:
    """u(x, y) = amplitude * (sin y, sin x)."""
    a = amplitude

    def value(x):
        return a * np.stack([np.sin(x[..., 1]), np.sin(x[..., 0])], axis=-1)

    def grad(x):
        g = np.zeros(np.shape(x)[:-1] + (2, 2))
        g[..., 0, 1] = a * np.cos(x[..., 1])
        g[..., 1, 0] = a * np.cos(x[..., 0])
        return g

    def hess(x):
        h = np.zeros(np.shape(x)[:-1] + (2, 2, 2))
        h[..., 0, 1, 1] = -a * np.sin(x[..., 1])
        h[..., 1, 0, 0] = -a * np.sin(x[..., 0])
        return h

    return AnalyticField(value, grad, hess, name="sine")
