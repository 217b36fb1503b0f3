"""Explicit constants entering the existence criterion.

Embedding and Helmholtz-projection constants are fixed, non-sharp values.
The Stokes regularity constant, the interpolation constants and the
Clement product constant are not available in closed form; they are
configuration inputs and every report flags them as user-certified.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

# entries the user must vouch for; they travel into every report
USER_CERTIFIED = ("c_ell", "c_i1", "c_i2", "c_i3", "c_H1")


def _dual_exponent(p: float) -> float:
    if not p > 1.0 or math.isinf(p):
        raise ValueError(f"exponent must lie in (1, inf), got {p!r}")
    return max(p, p / (p - 1.0))


def riesz_cp(p: float) -> float:
    """Riesz-transform constant ``2 (p* - 1)`` with ``p* = max(p, p')``."""
    return 2.0 * (_dual_exponent(p) - 1.0)


def helmholtz_c0(p: float) -> float:
    """L^p stability bound of the Helmholtz projection, ``1 + sqrt(3) c_p^2``."""
    return 1.0 + math.sqrt(3.0) * riesz_cp(p) ** 2


def helmholtz_c1(p: float) -> float:
    """W^{1,p} stability bound, ``1 + 3^((p*-1)/p*) c_p^2``."""
    ps = _dual_exponent(p)
    return 1.0 + 3.0 ** ((ps - 1.0) / ps) * riesz_cp(p) ** 2


def poincare_cp() -> float:
    """``sqrt(4 pi^2 + 1) / (2 pi)``: W^{1,2} norm vs gradient norm of mean-free fields."""
    return math.sqrt(4.0 * math.pi**2 + 1.0) / (2.0 * math.pi)


@dataclass(frozen=True)
class ConstantsTable:
    c_e1: float = 24.0
    c_e2: float = 22.0
    c_Pi1: float = 14.0
    c_Pi2: float = 35.0
    c_P: float = field(default_factory=poincare_cp)
    c_ell: float = 1.0
    c_i1: float = 3.0
    c_i2: float = 3.0
    c_i3: float = 3.0
    c_H1: float = 6.0
    k_edges: int = 4

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"constant {name} must be finite and > 0, got {value!r}")

    @property
    def c_tilde(self) -> float:
        """Reliability constant of the L^2 Stokes estimator."""
        return self.c_ell * max(self.c_i1, self.c_i2, self.k_edges * self.c_i3)

    def with_overrides(self, **overrides) -> "ConstantsTable":
        unknown = set(overrides) - set(asdict(self))
        if unknown:
            raise ValueError(f"unknown constants: {sorted(unknown)}")
        return replace(self, **overrides)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["c_tilde"] = self.c_tilde
        out["user_certified"] = list(USER_CERTIFIED)
        return out


def default_table() -> ConstantsTable:
    return ConstantsTable()
