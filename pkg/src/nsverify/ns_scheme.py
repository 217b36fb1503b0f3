"""Implicit Euler / Taylor-Hood discretisation of the periodic Navier-Stokes equations.

Each step solves, for all test functions ``v``,

    <(u - u_prev)/tau, v> + btilde(u, u, v) + nu <grad u, grad v> - <p, div v> = <f(t_i), v>
    <div u, q> = 0

with Newton's method on the saddle-point system (pressure mean fixed by a
Lagrange multiplier). The pointwise strong data ``F^i`` used by the
estimators is evaluated per cell from the converged iterates.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fields, mesh as mesh_mod
from .fem import FeFunction, QuadField, TaylorHood, discrete_stokes_projection, solve_linear

log = logging.getLogger(__name__)

MEAN_TOL = 1e-10


class StepFailed(RuntimeError):
    def __init__(self, step: int, iterations: int, residual: float):
        super().__init__(f"Newton failed at step {step} after {iterations} iterations "
                         f"(residual {residual:.3e}); reduce tau")
        self.step = step
        self.iterations = iterations
        self.residual = residual


@dataclass
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 25
    max_halvings: int = 8
    linear_solver: str = "direct"


@dataclass
class StepInfo:
    iterations: int
    residual: float


def _dual_norm(space: TaylorHood, r: np.ndarray) -> float:
    return float(np.sqrt(max(r @ space.mass_solve(r), 0.0)))


def forcing_quad(space: TaylorHood, forcing, t: float) -> QuadField | None:
    if forcing is None or isinstance(forcing, fields.ZeroForcing):
        return None
    return space.sample(lambda x: forcing(t, x))


def step(space: TaylorHood, u_prev: np.ndarray, load: np.ndarray, tau: float, nu: float,
         opts: NewtonOptions | None = None, index: int = 0) -> tuple[np.ndarray, np.ndarray, StepInfo]:
    """One implicit Euler step; ``load`` is ``<f^i, phi>``. Returns (u, p, info)."""
    opts = opts or NewtonOptions()
    M, A, B = space.mass, space.stiffness, space.divergence
    lin = M / tau + nu * A
    base = M @ u_prev / tau + load

    def residual(u, p):
        return lin @ u + space.convection_residual(u) - B.T @ p - base

    u, p = u_prev.copy(), np.zeros(space.n_pressure)
    r = residual(u, p)
    res = _dual_norm(space, r) + np.linalg.norm(B @ u)
    for it in range(opts.max_iter + 1):
        if res <= opts.tol:
            return u, p, StepInfo(it, res)
        if it == opts.max_iter:
            break
        K = lin + space.convection_jacobian(u)
        S = space.saddle_matrix(K, fix_velocity_mean=False)
        rhs = np.concatenate([-r, B @ u, [0.0]])
        dx = solve_linear(S, rhs, opts.linear_solver)
        du, dp = space.split(dx)
        lam = 1.0
        for _ in range(opts.max_halvings + 1):
            u_new, p_new = u + lam * du, p + lam * dp
            r_new = residual(u_new, p_new)
            res_new = _dual_norm(space, r_new) + np.linalg.norm(B @ u_new)
            if res_new < res or res_new <= opts.tol:
                break
            lam *= 0.5
        else:
            raise StepFailed(index, it + 1, res)
        u, p, r, res = u_new, p_new, r_new, res_new
        log.debug("step %d newton %d residual %.3e damping %g", index, it + 1, res, lam)
    raise StepFailed(index, opts.max_iter, res)


@dataclass
class Node:
    t: float
    u: FeFunction
    p: FeFunction


@dataclass
class Trajectory:
    space: TaylorHood
    tau: float
    nu: float
    forcing: object
    nodes: list[Node] = field(default_factory=list)
    newton: list[StepInfo] = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)
    estimates: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.nodes)

    @property
    def times(self) -> np.ndarray:
        return np.array([nd.t for nd in self.nodes])

    def u(self, i: int) -> np.ndarray:
        return self.nodes[i].u.coefficients

    def p(self, i: int) -> np.ndarray:
        return self.nodes[i].p.coefficients

    def _cached(self, key, make):
        if key not in self._cache:
            if len(self._cache) >= 12:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = make()
        return self._cache[key]

    def forcing_at(self, i: int) -> QuadField:
        """``f^i = f(t_i)`` sampled at the cell quadrature points."""
        def make():
            q = forcing_quad(self.space, self.forcing, self.nodes[i].t)
            return q if q is not None else self.space.quad_field(np.zeros((self.space.mesh.n_cells, self.space.rule.size, 3)))
        return self._cached(("f", i), make)

    def strong_data(self, i: int) -> QuadField:
        """``F^i``; for ``i = 0`` the Stokes data ``nu Lap_h u^0 - grad_h pi^0``."""
        return self._cached(("F", i), lambda: strong_data(self, i))

    def save(self, path) -> None:
        """Checkpoint (npz): coefficients plus the scalars needed to rebuild the space."""
        path = Path(path)
        meta = {"n": self.space.mesh.n, "tau": self.tau, "nu": self.nu,
                "times": [nd.t for nd in self.nodes],
                "newton": [[s.iterations, s.residual] for s in self.newton]}
        np.savez_compressed(path, meta=json.dumps(meta),
                            u=np.stack([self.u(i) for i in range(len(self))]),
                            p=np.stack([self.p(i) for i in range(len(self))]))

    @classmethod
    def load(cls, path, forcing, space: TaylorHood | None = None) -> "Trajectory":
        data = np.load(path)
        meta = json.loads(str(data["meta"]))
        if space is None or space.mesh.n != meta["n"]:
            space = TaylorHood(mesh_mod.build(meta["n"]))
        nodes = [Node(t, FeFunction("velocity", u, t), FeFunction("pressure", p, t))
                 for t, u, p in zip(meta["times"], data["u"], data["p"])]
        return cls(space, meta["tau"], meta["nu"], forcing, nodes,
                   [StepInfo(int(a), float(b)) for a, b in meta["newton"]])


def discrete_laplacian(space: TaylorHood, u: FeFunction) -> FeFunction:
    """``<Lap_h u, v> = -<grad u, grad v>`` for all velocity ``v``."""
    return FeFunction("velocity", space.discrete_laplacian(u.coefficients), u.time)


def discrete_gradient(space: TaylorHood, p: FeFunction) -> FeFunction:
    """``<grad_h p, v> = -<p, div v>`` for all velocity ``v``."""
    return FeFunction("velocity", space.discrete_gradient(p.coefficients), p.time)


def strong_data(traj: Trajectory, i: int) -> QuadField:
    space = traj.space
    if i == 0:
        lap = space.discrete_laplacian(traj.u(0))
        grad_p = space.discrete_gradient(traj.p(0))
        F = space.velocity_quad(traj.nu * lap - grad_p)
    else:
        u = traj.u(i)
        vals, grads = space.eval_velocity(u)
        conv = np.einsum("cqdk,cqk->cqd", grads, vals)
        div = np.trace(grads, axis1=2, axis2=3)
        prev = space.eval_velocity(traj.u(i - 1))[0]
        F = space.quad_field(conv + 0.5 * div[..., None] * vals + (vals - prev) / traj.tau) - traj.forcing_at(i)
    mean = F.mean()
    scale = max(1.0, float(np.abs(F.cell_means()).max()))
    if np.abs(mean).max() > MEAN_TOL * scale:
        log.warning("strong data F^%d has mean %s", i, mean)
    return F


def initial_state(space: TaylorHood, u0) -> tuple[FeFunction, FeFunction]:
    """Discrete Stokes projection of the analytic initial velocity."""
    return discrete_stokes_projection(space, u0)


def run(space: TaylorHood, u0, forcing, tau: float, n_steps: int, nu: float,
        opts: NewtonOptions | None = None, initial: tuple[FeFunction, FeFunction] | None = None,
        callback=None) -> Trajectory:
    """Time-step from the Stokes projection of ``u0`` over ``n_steps`` steps of size ``tau``."""
    if tau <= 0 or nu <= 0 or n_steps < 0:
        raise ValueError("tau and nu must be positive and n_steps nonnegative")
    u_h, p_h = initial if initial is not None else initial_state(space, u0)
    u_h.time = p_h.time = 0.0
    traj = Trajectory(space, tau, nu, forcing, [Node(0.0, u_h, p_h)])
    u = u_h.coefficients
    for i in range(1, n_steps + 1):
        t = i * tau
        fq = forcing_quad(space, forcing, t)
        load = fq.load_vector() if fq is not None else np.zeros(space.n_velocity)
        u, p, info = step(space, u, load, tau, nu, opts, index=i)
        traj.nodes.append(Node(t, FeFunction("velocity", u, t), FeFunction("pressure", p, t)))
        traj.newton.append(info)
        if callback is not None:
            callback(i, traj)
    return traj


def consistency_defect(traj: Trajectory, i: int, v: np.ndarray) -> float:
    """``<F^i, v> + nu <grad u^i, grad v> - <pi^i, div v>`` (zero for a converged step)."""
    space = traj.space
    return float(traj.strong_data(i).load_vector() @ v + traj.nu * (space.stiffness @ traj.u(i)) @ v
                 - traj.p(i) @ (space.divergence @ v))


__all__ = ["StepFailed", "NewtonOptions", "step", "run", "Trajectory", "Node", "discrete_laplacian",
           "discrete_gradient", "strong_data", "initial_state", "consistency_defect"]
