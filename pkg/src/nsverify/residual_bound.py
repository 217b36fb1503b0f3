"""Computable per-slab bounds on the residual of the Stokes reconstruction.

On every time slab ``(t_{i-1}, t_i)`` the residual is split into five
groups, each bounded by discrete quantities:

1. ``c_e2 H0`` of the time-differenced Stokes data,
2. ``c_e2`` times the L2 norm of the second difference quotient (for the
   first slab: the start-up defect against the initial Stokes data),
3. ``c_e2 c_e1 nu^-2 c_P^2 ||F^i - F^{i-1}||_{-1,2}^2`` via Poisson solves,
4. the nonlinear coupling ``sum_j c_e1 (c_e2 + c_e1) H1_j (2 ||u^j||_{1,2} + H1_j)``,
5. ``c_e2`` times the time-interpolation error of the forcing.

The sum bounds the residual in ``L^inf(W^{-1,3})`` and, with embedding
constant one on the unit torus, in ``L^inf(W^{-1,2})``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .constants import ConstantsTable, default_table
from .fem import QuadField, norm
from .ns_scheme import Trajectory
from .stokes_estimator import EstimatorBreakdown, estimate, negative_norm_w12

FORCING_MODES = ("zero", "affine", "analytic-sampled")
DEFAULT_SAMPLES = 33


@dataclass
class NodeEstimates:
    """Stokes estimators of node ``i`` (data ``-F^i``) and the velocity norms used downstream."""
    i: int
    H0: float
    H1: float
    u_L6: float
    u_W12: float
    breakdown: EstimatorBreakdown | None = field(default=None, repr=False)


@dataclass
class SlabBound:
    slab: int
    terms: tuple[float, float, float, float, float]
    flags: tuple[str, ...] = ()

    @property
    def total_w13(self) -> float:
        return float(sum(self.terms))

    @property
    def total_w12(self) -> float:
        # L3 -> L2 embedding constant 1 on the unit-volume torus
        return self.total_w13


@dataclass
class ResidualLedger:
    rows: list[SlabBound] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slab", "term1", "term2", "term3", "term4", "term5", "total_w13", "total_w12", "flags"])
            for r in self.rows:
                w.writerow([r.slab, *map(repr, map(float, r.terms)), repr(r.total_w13), repr(r.total_w12),
                            ";".join(r.flags)])


def node_estimates(traj: Trajectory, i: int, constants: ConstantsTable | None = None,
                   keep_breakdown: bool = False) -> NodeEstimates:
    """The scheme solves the Stokes problem with data ``-F^i``; estimate that reconstruction."""
    constants = constants or default_table()
    key = (i, constants)
    cache = traj.estimates
    if key in cache and (cache[key].breakdown is not None or not keep_breakdown):
        return cache[key]
    space = traj.space
    b = estimate(space, traj.u(i), traj.p(i), -traj.strong_data(i), traj.nu, constants)
    out = NodeEstimates(i, b.H0, b.H1, norm(space, traj.u(i), "L6"), norm(space, traj.u(i), "W12"),
                        b if keep_breakdown else None)
    cache[key] = out
    return out


def forcing_interpolation_bound(traj: Trajectory, slab: int, mode: str,
                                samples: int = DEFAULT_SAMPLES) -> tuple[float, str]:
    """``sup_t ||l_i f^i + l_{i-1} f^{i-1} - f(t)||_{L2}`` on slab ``i`` with its rigor flag."""
    if mode not in FORCING_MODES:
        raise ValueError(f"undeclared forcing mode {mode!r}; expected one of {FORCING_MODES}")
    if mode in ("zero", "affine"):
        return 0.0, "exact"
    space = traj.space
    t0, t1 = traj.nodes[slab - 1].t, traj.nodes[slab].t
    f0, f1 = traj.forcing_at(slab - 1), traj.forcing_at(slab)
    x = space.points()
    worst = 0.0
    for s in np.linspace(0.0, 1.0, samples):
        t = t0 + s * (t1 - t0)
        diff = f1 * s + f0 * (1.0 - s) - space.quad_field(traj.forcing(t, x))
        worst = max(worst, diff.l2_norm())
    return worst, "sampled, non-rigorous"


def _time_difference(traj: Trajectory, i: int) -> tuple[np.ndarray, np.ndarray, QuadField]:
    tau = traj.tau
    du = (traj.u(i) - traj.u(i - 1)) / tau
    dp = (traj.p(i) - traj.p(i - 1)) / tau
    dF = (traj.strong_data(i) - traj.strong_data(i - 1)) / tau
    return du, dp, dF


def _start_up_defect(traj: Trajectory) -> float:
    """``||d_tau u^1 + (u^0 . grad) u^0 + (div u^0) u^0 / 2 - F^0 - f^0||_{L2}``."""
    space = traj.space
    vals, grads = space.eval_velocity(traj.u(0))
    conv = np.einsum("cqdk,cqk->cqd", grads, vals)
    div = np.trace(grads, axis1=2, axis2=3)
    d_tau = space.velocity_quad((traj.u(1) - traj.u(0)) / traj.tau)
    g = d_tau + space.quad_field(conv + 0.5 * div[..., None] * vals) - traj.strong_data(0) - traj.forcing_at(0)
    return g.l2_norm()


def bound_slab(traj: Trajectory, i: int, forcing_mode: str, constants: ConstantsTable | None = None,
               samples: int = DEFAULT_SAMPLES) -> SlabBound:
    """Residual bound on slab ``i >= 1`` (``i = 1`` uses the start-up variant)."""
    constants = constants or default_table()
    if i < 1 or i >= len(traj):
        raise IndexError(f"slab {i} needs nodes {max(i - 2, 0)}..{i}; trajectory has {len(traj)} nodes")
    space, nu, c = traj.space, traj.nu, constants
    flags = ["quadrature-approximate"]

    du, dp, dF = _time_difference(traj, i)
    t1 = c.c_e2 * estimate(space, du, dp, -dF, nu, c).H0

    if i == 1:
        t2 = c.c_e2 * _start_up_defect(traj)
    else:
        second = (traj.u(i) - 2.0 * traj.u(i - 1) + traj.u(i - 2)) / traj.tau
        t2 = c.c_e2 * norm(space, second, "L2")

    jump = traj.strong_data(i) - traj.strong_data(i - 1)
    t3 = c.c_e2 * c.c_e1 * nu**-2 * c.c_P**2 * negative_norm_w12(space, jump, c) ** 2

    t4 = 0.0
    for j in (i - 1, i):
        est = node_estimates(traj, j, c)
        t4 += c.c_e1 * (c.c_e2 + c.c_e1) * est.H1 * (2.0 * est.u_W12 + est.H1)

    f_bound, f_flag = forcing_interpolation_bound(traj, i, forcing_mode, samples)
    t5 = c.c_e2 * f_bound
    if f_flag != "exact":
        flags.append("sampled-forcing")
    return SlabBound(i, (float(t1), float(t2), float(t3), float(t4), float(t5)), tuple(flags))


def bound_first_slab(traj: Trajectory, forcing_mode: str, constants: ConstantsTable | None = None,
                     samples: int = DEFAULT_SAMPLES) -> SlabBound:
    return bound_slab(traj, 1, forcing_mode, constants, samples)


def build_ledger(traj: Trajectory, forcing_mode: str, constants: ConstantsTable | None = None,
                 samples: int = DEFAULT_SAMPLES, upto: int | None = None) -> ResidualLedger:
    upto = len(traj) - 1 if upto is None else upto
    return ResidualLedger([bound_slab(traj, i, forcing_mode, constants, samples) for i in range(1, upto + 1)])
