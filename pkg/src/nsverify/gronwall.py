"""Generalised Gronwall condition and its conditional bound.

If ``g1(t) + int_0^t g2 <= A + int_0^t alpha g1 + sum_i B_i sup(g1)^beta_i int_0^t (g1 + g2)``
on ``[0, T]`` and ``8 (1 + T) (B1 (8AM)^beta1 + B2 (8AM)^beta2) <= 1`` with
``M = exp(int_0^T alpha)``, then ``sup g1 + int_0^T g2 <= 2AM``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GronwallInput:
    T: float
    A: float
    B1: float
    B2: float
    beta1: float
    beta2: float
    alpha_integral: float

    def __post_init__(self):
        for name in ("T", "A", "B1", "B2", "beta1", "beta2", "alpha_integral"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or math.isnan(value):
                raise ValueError(f"{name} must be a real number, got {value!r}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        for name in ("A", "B1", "B2", "alpha_integral"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        for name in ("beta1", "beta2"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {getattr(self, name)}")


@dataclass(frozen=True)
class GronwallVerdict:
    M: float
    condition_lhs: float
    satisfied: bool
    bound: float

    # individual contributions 8(1+T) B_i (8AM)^beta_i
    term1: float = 0.0
    term2: float = 0.0


def evaluate(data: GronwallInput) -> GronwallVerdict:
    M = math.exp(data.alpha_integral) if data.alpha_integral < 709.0 else math.inf
    x = 8.0 * data.A * M if data.A > 0 else 0.0
    pre = 8.0 * (1.0 + data.T)
    term1 = pre * data.B1 * x**data.beta1 if data.B1 > 0 else 0.0
    term2 = pre * data.B2 * x**data.beta2 if data.B2 > 0 else 0.0
    lhs = term1 + term2
    return GronwallVerdict(
        M=M, condition_lhs=lhs, satisfied=bool(lhs <= 1.0), bound=2.0 * data.A * M if data.A > 0 else 0.0,
        term1=term1, term2=term2,
    )


def _cumtrapz(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    out[1:] = np.cumsum(0.5 * np.diff(grid) * (values[1:] + values[:-1]))
    return out


def hypothesis_slack(g1, g2, alpha, data: GronwallInput, grid) -> np.ndarray:
    """RHS minus LHS of the hypothesis at each grid node (trapezoidal integrals)."""
    g1, g2, alpha, grid = (np.asarray(a, dtype=float) for a in (g1, g2, alpha, grid))
    n = grid.shape[0]
    if not (g1.shape == g2.shape == alpha.shape == (n,)):
        raise ValueError("g1, g2, alpha and grid must be 1D arrays of equal length")
    if n < 2 or np.any(np.diff(grid) <= 0) or abs(grid[0]) > 0:
        raise ValueError("grid must start at 0 and be strictly increasing")
    sup1 = float(np.max(g1))
    lhs = g1 + _cumtrapz(g2, grid)
    rhs = (
        data.A
        + _cumtrapz(alpha * g1, grid)
        + (data.B1 * sup1**data.beta1 + data.B2 * sup1**data.beta2) * _cumtrapz(g1 + g2, grid)
    )
    return rhs - lhs


def check_hypothesis(g1, g2, alpha, data: GronwallInput, grid) -> bool:
    """Discrete check of the lemma's hypothesis at every grid node."""
    slack = hypothesis_slack(g1, g2, alpha, data, grid)
    scale = max(1.0, data.A, float(np.max(np.abs(g1))), float(np.max(np.abs(g2))))
    return bool(np.all(slack >= -1e-10 * scale))
