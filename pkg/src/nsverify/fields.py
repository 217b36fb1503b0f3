"""Analytic periodic fields used as initial data, forcing and manufactured solutions.

A field maps points ``x`` of shape ``(..., 3)`` to values ``(..., 3)``;
``grad`` returns ``(..., 3, 3)`` with ``[..., d, c] = d u_d / d x_c``.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


class TaylorGreen:
    """``a (sin X cos Y, -cos X sin Y, 0)`` with ``X = 2 pi x``, ``Y = 2 pi y``; solenoidal."""

    def __init__(self, amplitude: float = 1.0):
        self.amplitude = float(amplitude)

    def __call__(self, x):
        X, Y = TWO_PI * x[..., 0], TWO_PI * x[..., 1]
        a = self.amplitude
        return np.stack([a * np.sin(X) * np.cos(Y), -a * np.cos(X) * np.sin(Y), np.zeros_like(X)], axis=-1)

    def grad(self, x):
        X, Y = TWO_PI * x[..., 0], TWO_PI * x[..., 1]
        k = TWO_PI * self.amplitude
        g = np.zeros(x.shape[:-1] + (3, 3))
        g[..., 0, 0] = k * np.cos(X) * np.cos(Y)
        g[..., 0, 1] = -k * np.sin(X) * np.sin(Y)
        g[..., 1, 0] = k * np.sin(X) * np.sin(Y)
        g[..., 1, 1] = -k * np.cos(X) * np.cos(Y)
        return g

    def laplacian(self, x):
        return -2.0 * TWO_PI**2 * self(x)


class Zero:
    amplitude = 0.0

    def __call__(self, x):
        return np.zeros(x.shape[:-1] + (3,))

    def grad(self, x):
        return np.zeros(x.shape[:-1] + (3, 3))

    def laplacian(self, x):
        return np.zeros(x.shape[:-1] + (3,))


class Forcing:
    """Space-time forcing ``f(t, x)``; ``affine_in_time`` marks exact linear time dependence."""

    affine_in_time = False

    def __call__(self, t: float, x):
        raise NotImplementedError


class ZeroForcing(Forcing):
    affine_in_time = True

    def __call__(self, t, x):
        return np.zeros(x.shape[:-1] + (3,))


class SteadyForcing(Forcing):
    affine_in_time = True

    def __init__(self, field):
        self.field = field

    def __call__(self, t, x):
        return self.field(x)


class ModulatedForcing(Forcing):
    """``g(t) * field(x)`` for a scalar time profile ``g``."""

    def __init__(self, profile, field, affine_in_time: bool = False):
        self.profile = profile
        self.field = field
        self.affine_in_time = affine_in_time

    def __call__(self, t, x):
        return self.profile(t) * self.field(x)


class ManufacturedTaylorGreen(Forcing):
    """Forcing for the exact solution ``u = a(t) TG(x)`` with zero pressure.

    ``f = a' TG + nu a 8 pi^2 TG + a^2 (TG . grad) TG``.
    """

    def __init__(self, nu: float, profile, dprofile):
        self.nu = nu
        self.profile = profile
        self.dprofile = dprofile
        self.tg = TaylorGreen(1.0)

    def exact(self, t: float) -> TaylorGreen:
        return TaylorGreen(self.profile(t))

    def __call__(self, t, x):
        a, da = self.profile(t), self.dprofile(t)
        u, g = self.tg(x), self.tg.grad(x)
        conv = np.einsum("...dc,...c->...d", g, u)
        return (da + self.nu * a * 2.0 * TWO_PI**2) * u + a * a * conv


class TrigField:
    """``sum_m a_m sin(2 pi k_m . x + phase_m)`` with ``a_m . k_m = 0`` (solenoidal)."""

    def __init__(self, modes):
        self.k = np.array([m["k"] for m in modes], dtype=float).reshape(-1, 3)
        self.a = np.array([m["amplitude"] for m in modes], dtype=float).reshape(-1, 3)
        self.phase = np.array([m.get("phase", 0.0) for m in modes], dtype=float)
        if np.any(np.abs(np.einsum("md,md->m", self.k, self.a)) > 1e-12 * (1 + np.abs(self.a).max(initial=0))):
            raise ValueError("each mode needs amplitude orthogonal to its wave vector (divergence-free)")
        if np.any(self.k != np.round(self.k)):
            raise ValueError("wave vectors must be integer for periodicity")

    def _arg(self, x):
        return TWO_PI * np.einsum("...d,md->...m", x, self.k) + self.phase

    def __call__(self, x):
        return np.einsum("...m,md->...d", np.sin(self._arg(x)), self.a)

    def grad(self, x):
        return TWO_PI * np.einsum("...m,md,mc->...dc", np.cos(self._arg(x)), self.a, self.k)

    def laplacian(self, x):
        k2 = TWO_PI**2 * np.sum(self.k**2, axis=1)
        return -np.einsum("...m,md->...d", np.sin(self._arg(x)) * k2, self.a)
