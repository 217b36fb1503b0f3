"""A posteriori existence check for ``y' = y^2`` via implicit Euler.

The piecewise affine interpolant of the Euler values solves the ODE up to
a computable residual; the Gronwall condition ``8 (1+T) (8AM)^(1/2) <= 1``
then certifies that the exact solution stays bounded on ``[0, T]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gronwall

# 3-point Gauss-Legendre on [0, 1]; exact for the quartic |r|^2
_GL_X, _GL_W = np.polynomial.legendre.leggauss(3)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class StepUnsolvable(ArithmeticError):
    """The implicit Euler equation has no real root (tau too large near blow-up)."""

    def __init__(self, step: int, y_prev: float, tau: float):
        super().__init__(
            f"step {step}: 1 - 4*tau*y = {1 - 4 * tau * y_prev:.6g} < 0 (tau={tau}, y={y_prev:.6g})"
        )
        self.step = step
        self.y_prev = y_prev


@dataclass(frozen=True)
class OdeTrajectory:
    y0: float
    tau: float
    values: np.ndarray  # y_0 .. y_N

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(len(self.values))

    @property
    def nodes(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.values.tolist()))

    @property
    def T(self) -> float:
        return self.tau * (len(self.values) - 1)

    def truncate(self, n_steps: int) -> "OdeTrajectory":
        return OdeTrajectory(self.y0, self.tau, self.values[: n_steps + 1])

    def interpolant(self, t):
        return np.interp(t, self.times, self.values)


def euler_solve(y0: float, tau: float, n_steps: int) -> OdeTrajectory:
    if y0 < 0:
        raise ValueError("y0 must be nonnegative")
    if tau <= 0 or n_steps < 1:
        raise ValueError("tau must be positive and n_steps >= 1")
    ys = [float(y0)]
    for i in range(1, n_steps + 1):
        y = ys[-1]
        disc = 1.0 - 4.0 * tau * y
        if disc < 0:
            raise StepUnsolvable(i, y, tau)
        # smaller root of tau y^2 - y + y_prev = 0, written without cancellation
        ys.append(2.0 * y / (1.0 + math.sqrt(disc)))
    return OdeTrajectory(float(y0), float(tau), np.array(ys))


def euler_solve_until_failure(y0: float, tau: float, n_steps: int) -> tuple[OdeTrajectory, StepUnsolvable | None]:
    """Like :func:`euler_solve` but returns the solvable prefix instead of raising."""
    try:
        return euler_solve(y0, tau, n_steps), None
    except StepUnsolvable as exc:
        if exc.step == 1:
            return OdeTrajectory(float(y0), float(tau), np.array([float(y0)])), exc
        return euler_solve(y0, tau, exc.step - 1), exc


class Residual:
    """r = yhat' - yhat^2, a quadratic polynomial on every slab."""

    def __init__(self, traj: OdeTrajectory):
        self.traj = traj
        y = traj.values
        self.slopes = np.diff(y) / traj.tau

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        tau = self.traj.tau
        idx = np.clip(np.ceil(t / tau - 1e-12).astype(int), 1, len(self.slopes))
        return self.slopes[idx - 1] - self.traj.interpolant(t) ** 2

    def slab_integrals(self) -> np.ndarray:
        """Exact int |r|^2 over each slab."""
        y = self.traj.values
        lin = y[:-1, None] + _GL_X[None, :] * (y[1:] - y[:-1])[:, None]
        r = self.slopes[:, None] - lin**2
        return self.traj.tau * (r**2 @ _GL_W)

    @property
    def A(self) -> float:
        return float(np.sum(self.slab_integrals()))


def residual(traj: OdeTrajectory) -> Residual:
    return Residual(traj)


@dataclass(frozen=True)
class OdeCertificate:
    T: float
    A: float
    M: float
    condition_lhs: float
    satisfied: bool
    bound: float

    def to_dict(self) -> dict:
        return {
            "T": self.T, "A": self.A, "M": self.M, "conditionLhs": self.condition_lhs,
            "satisfied": self.satisfied, "bound": self.bound,
        }


def _prefix_quantities(traj: OdeTrajectory) -> tuple[np.ndarray, np.ndarray]:
    y = traj.values
    A = np.concatenate([[0.0], np.cumsum(residual(traj).slab_integrals())])
    # yhat is affine and nonnegative, so int |yhat| is the trapezoid value
    alpha = np.concatenate([[0.0], np.cumsum(traj.tau * (2.0 * (y[:-1] + y[1:]) + 1.0))])
    return A, alpha


def certify(traj: OdeTrajectory) -> OdeCertificate:
    A, alpha = _prefix_quantities(traj)
    return _certificate(traj.T, float(A[-1]), float(alpha[-1]))


def _certificate(T: float, A: float, alpha_integral: float) -> OdeCertificate:
    verdict = gronwall.evaluate(gronwall.GronwallInput(
        T=T, A=A, B1=1.0, B2=0.0, beta1=0.5, beta2=1.0, alpha_integral=alpha_integral,
    ))
    return OdeCertificate(T, A, verdict.M, verdict.condition_lhs, verdict.satisfied, verdict.bound)


def prefix_certificates(traj: OdeTrajectory) -> list[OdeCertificate]:
    """Certificates for every horizon t_1, ..., t_N."""
    A, alpha = _prefix_quantities(traj)
    return [_certificate(float(traj.tau * n), float(A[n]), float(alpha[n]))
            for n in range(1, len(traj.values))]


def certified_horizon(traj: OdeTrajectory) -> float:
    """Largest grid time t_n whose prefix certificate is satisfied (0.0 if none)."""
    best = 0.0
    for cert in prefix_certificates(traj):
        if cert.satisfied:
            best = cert.T
    return best


def exact_solution(y0: float, t):
    """(1/y0 - t)^-1, the exact flow (y0 = 0 gives 0)."""
    t = np.asarray(t, dtype=float)
    if y0 == 0:
        return np.zeros_like(t)
    return 1.0 / (1.0 / y0 - t)
