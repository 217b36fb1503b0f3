"""Collapsed Gauss-Jacobi rules on the reference triangle and tetrahedron.

Rules are returned in barycentric coordinates so the same points can be
mapped into any simplex (or any face of a tetrahedron) without a
coordinate transform. Weights sum to the reference measure (1/2 or 1/6).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


def _gauss_jacobi01(m: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule on [0, 1] for the weight (1 - t)^alpha."""
    x, w = roots_jacobi(m, alpha, 0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


@dataclass(frozen=True)
class Rule:
    degree: int
    bary: np.ndarray  # (nq, d+1)
    weights: np.ndarray  # (nq,)

    @property
    def size(self) -> int:
        return self.weights.shape[0]


@lru_cache(maxsize=None)
def tet_rule(degree: int) -> Rule:
    """Rule exact for polynomials of total degree ``degree`` on the unit tetrahedron."""
    m = max(1, (degree + 2) // 2)
    z, wz = _gauss_jacobi01(m, 2)
    v, wv = _gauss_jacobi01(m, 1)
    u, wu = _gauss_jacobi01(m, 0)
    Z, V, U = np.meshgrid(z, v, u, indexing="ij")
    W = wz[:, None, None] * wv[None, :, None] * wu[None, None, :]
    y = V * (1.0 - Z)
    x = U * (1.0 - V) * (1.0 - Z)
    pts = np.stack([x.ravel(), y.ravel(), Z.ravel()], axis=1)
    bary = np.column_stack([1.0 - pts.sum(axis=1), pts])
    return Rule(degree, bary, W.ravel())


@lru_cache(maxsize=None)
def tri_rule(degree: int) -> Rule:
    """Rule exact for polynomials of total degree ``degree`` on the unit triangle."""
    m = max(1, (degree + 2) // 2)
    v, wv = _gauss_jacobi01(m, 1)
    u, wu = _gauss_jacobi01(m, 0)
    V, U = np.meshgrid(v, u, indexing="ij")
    W = wv[:, None] * wu[None, :]
    x = U * (1.0 - V)
    pts = np.stack([x.ravel(), V.ravel()], axis=1)
    bary = np.column_stack([1.0 - pts.sum(axis=1), pts])
    return Rule(degree, bary, W.ravel())
