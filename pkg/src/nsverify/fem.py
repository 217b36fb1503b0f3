"""Periodic Taylor-Hood (P2 velocity / P1 pressure) spaces on a Kuhn mesh.

Velocity coefficients are stored component-major: dof ``c * n_p2 + node``.
P2 nodes are the mesh vertices followed by the edge midpoints. All
bilinear and trilinear forms are integrated exactly; non-polynomial
integrands use the fixed degree-10 rule and are flagged by callers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import LOCAL_EDGES, PeriodicMesh
from .quadrature import Rule, tet_rule

QUAD_DEGREE = 10
NORMS = ("L2", "L3", "L6", "W12")


# ---------------------------------------------------------------- reference P2

def p2_values(bary: np.ndarray) -> np.ndarray:
    """P2 shape functions at barycentric points, (nq, 10)."""
    lam = bary
    vals = [lam[:, i] * (2.0 * lam[:, i] - 1.0) for i in range(4)]
    vals += [4.0 * lam[:, a] * lam[:, b] for a, b in LOCAL_EDGES]
    return np.stack(vals, axis=1)


def p2_grad_coeffs(bary: np.ndarray) -> np.ndarray:
    """``C`` with grad N_a = sum_j C[q, a, j] grad lambda_j, shape (nq, 10, 4)."""
    nq = bary.shape[0]
    C = np.zeros((nq, 10, 4))
    for i in range(4):
        C[:, i, i] = 4.0 * bary[:, i] - 1.0
    for e, (a, b) in enumerate(LOCAL_EDGES):
        C[:, 4 + e, a] = 4.0 * bary[:, b]
        C[:, 4 + e, b] = 4.0 * bary[:, a]
    return C


def _p2_hessian_coeffs() -> np.ndarray:
    """``H`` with hess N_a = sum_jk H[a, j, k] grad lambda_j (x) grad lambda_k."""
    H = np.zeros((10, 4, 4))
    for i in range(4):
        H[i, i, i] = 4.0
    for e, (a, b) in enumerate(LOCAL_EDGES):
        H[4 + e, a, b] = H[4 + e, b, a] = 4.0
    return H


_P2_HESS = _p2_hessian_coeffs()


@dataclass
class FeFunction:
    space: str  # "velocity" | "pressure"
    coefficients: np.ndarray
    time: float | None = None


class QuadField:
    """Vector field sampled at the points of a fixed cell rule, (n_cells, nq, 3).

    Elementwise-polynomial data (F^i, forcing samples) live in this form;
    nothing is assumed about continuity across faces.
    """

    __array_priority__ = 100

    def __init__(self, space: "TaylorHood", values: np.ndarray, degree: int = QUAD_DEGREE):
        self.space = space
        self.values = values
        self.degree = degree

    @property
    def rule(self) -> Rule:
        return tet_rule(self.degree)

    def _wrap(self, values):
        return QuadField(self.space, values, self.degree)

    def _other(self, other):
        if isinstance(other, QuadField):
            if other.degree != self.degree:
                raise ValueError("quadrature fields on different rules")
            return other.values
        return other

    def __add__(self, other):
        return self._wrap(self.values + self._other(other))

    def __sub__(self, other):
        return self._wrap(self.values - self._other(other))

    def __mul__(self, s):
        return self._wrap(self.values * s)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self._wrap(self.values / s)

    def __neg__(self):
        return self._wrap(-self.values)

    def cell_integrals(self) -> np.ndarray:
        """int_K of each component, (n_cells, 3)."""
        w = self.space.cell_weights(self.rule)
        return np.einsum("cq,cqd->cd", w, self.values)

    def mean(self) -> np.ndarray:
        return self.cell_integrals().sum(axis=0)

    def cell_means(self) -> np.ndarray:
        return self.cell_integrals() / self.space.mesh.volumes[:, None]

    def cell_l2_squared(self) -> np.ndarray:
        w = self.space.cell_weights(self.rule)
        return np.einsum("cq,cq->c", w, np.sum(self.values**2, axis=2))

    def l2_norm(self) -> float:
        return float(np.sqrt(self.cell_l2_squared().sum()))

    def lp_norm(self, p: float) -> float:
        w = self.space.cell_weights(self.rule)
        mag = np.sqrt(np.sum(self.values**2, axis=2))
        return float(np.sum(w * mag**p) ** (1.0 / p))

    def load_vector(self) -> np.ndarray:
        """``<F, phi>`` for every velocity basis function."""
        sp_ = self.space
        w = sp_.cell_weights(self.rule)
        phi = p2_values(self.rule.bary)
        local = np.einsum("cq,qa,cqd->cda", w, phi, self.values)  # (cells, 3, 10)
        out = np.zeros((3, sp_.n_p2))
        for d in range(3):
            np.add.at(out[d], sp_.p2_dofs, local[:, d, :])
        return out.ravel()


class TaylorHood:
    """Vector P2 velocity / scalar P1 pressure pair on a periodic mesh."""

    def __init__(self, mesh: PeriodicMesh):
        self.mesh = mesh
        self.n_p2 = mesh.n_vertices + mesh.n_edges
        self.n_p1 = mesh.n_vertices
        self.p2_dofs = np.concatenate([mesh.cells, mesh.n_vertices + mesh.cell_edges], axis=1)
        self.p1_dofs = mesh.cells
        self.rule = tet_rule(QUAD_DEGREE)
        self._factor_cache: dict = {}

    @property
    def n_velocity(self) -> int:
        return 3 * self.n_p2

    @property
    def n_pressure(self) -> int:
        return self.n_p1

    # ------------------------------------------------------------- geometry

    def cell_weights(self, rule: Rule) -> np.ndarray:
        return 6.0 * self.mesh.volumes[:, None] * rule.weights[None, :]

    def points(self, rule: Rule | None = None) -> np.ndarray:
        rule = rule or self.rule
        return np.einsum("qj,cjd->cqd", rule.bary, self.mesh.coords)

    def p2_grads(self, rule: Rule) -> np.ndarray:
        """Physical P2 gradients, (n_cells, nq, 10, 3)."""
        return np.einsum("qaj,cjd->cqad", p2_grad_coeffs(rule.bary), self.mesh.bary_grads)

    @cached_property
    def p2_laplacians(self) -> np.ndarray:
        """Laplacian of every local P2 function (constant per cell), (n_cells, 10)."""
        G = self.mesh.bary_grads
        gram = np.einsum("cjd,ckd->cjk", G, G)
        return np.einsum("ajk,cjk->ca", _P2_HESS, gram)

    # ----------------------------------------------------------- evaluation

    def velocity_local(self, u: np.ndarray) -> np.ndarray:
        """Local coefficients, (n_cells, 3, 10)."""
        return u.reshape(3, self.n_p2)[:, self.p2_dofs].transpose(1, 0, 2)

    def eval_velocity(self, u: np.ndarray, rule: Rule | None = None):
        """Values (n_cells, nq, 3) and gradients (n_cells, nq, 3, 3) [d, c] = du_d/dx_c."""
        rule = rule or self.rule
        loc = self.velocity_local(u)
        vals = np.einsum("qa,cda->cqd", p2_values(rule.bary), loc)
        coeff = np.einsum("qaj,cda->cqdj", p2_grad_coeffs(rule.bary), loc)
        grads = np.einsum("cqdj,cjk->cqdk", coeff, self.mesh.bary_grads)
        return vals, grads

    def eval_velocity_bary(self, u: np.ndarray, cells: np.ndarray, bary: np.ndarray):
        """Gradients at per-cell barycentric points, bary (m, nq, 4) -> (m, nq, 3, 3)."""
        loc = self.velocity_local(u)[cells]
        nq = bary.shape[1]
        C = p2_grad_coeffs(bary.reshape(-1, 4)).reshape(bary.shape[0], nq, 10, 4)
        coeff = np.einsum("mqaj,mda->mqdj", C, loc)
        return np.einsum("mqdj,mjk->mqdk", coeff, self.mesh.bary_grads[cells])

    def eval_pressure(self, p: np.ndarray, rule: Rule | None = None) -> np.ndarray:
        rule = rule or self.rule
        return np.einsum("qj,cj->cq", rule.bary, p[self.p1_dofs])

    def pressure_grad(self, p: np.ndarray) -> np.ndarray:
        """Constant per-cell gradient of a P1 function, (n_cells, 3)."""
        return np.einsum("cj,cjd->cd", p[self.p1_dofs], self.mesh.bary_grads)

    def velocity_laplacian(self, u: np.ndarray) -> np.ndarray:
        """Elementwise Laplacian of a P2 field (constant per cell), (n_cells, 3)."""
        return np.einsum("cda,ca->cd", self.velocity_local(u), self.p2_laplacians)

    def quad_field(self, values: np.ndarray) -> QuadField:
        return QuadField(self, values, QUAD_DEGREE)

    def sample(self, field) -> QuadField:
        """Analytic field sampled at the degree-10 cell points."""
        return self.quad_field(field(self.points()))

    def velocity_quad(self, u: np.ndarray) -> QuadField:
        return self.quad_field(self.eval_velocity(u)[0])

    def interpolate_velocity(self, field) -> np.ndarray:
        """Nodal P2 interpolant of an analytic field."""
        mesh = self.mesh
        nodes = np.zeros((self.n_p2, 3))
        nodes[self.p2_dofs[:, :4]] = mesh.coords
        for e, (a, b) in enumerate(LOCAL_EDGES):
            nodes[self.p2_dofs[:, 4 + e]] = 0.5 * (mesh.coords[:, a] + mesh.coords[:, b])
        return np.ascontiguousarray(field(nodes).T).ravel()

    # ------------------------------------------------------------- assembly

    def _scatter(self, local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
        r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
        c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
        return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()

    @cached_property
    def scalar_mass(self) -> sp.csr_matrix:
        rule = tet_rule(4)
        phi = p2_values(rule.bary)
        local = np.einsum("cq,qa,qb->cab", self.cell_weights(rule), phi, phi)
        return self._scatter(local, self.p2_dofs, self.p2_dofs, (self.n_p2, self.n_p2))

    @cached_property
    def scalar_stiffness(self) -> sp.csr_matrix:
        rule = tet_rule(2)
        G = self.p2_grads(rule)
        local = np.einsum("cq,cqad,cqbd->cab", self.cell_weights(rule), G, G)
        return self._scatter(local, self.p2_dofs, self.p2_dofs, (self.n_p2, self.n_p2))

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return sp.block_diag([self.scalar_mass] * 3, format="csr")

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return sp.block_diag([self.scalar_stiffness] * 3, format="csr")

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        """``B[q, (c, a)] = <d_c phi_a, psi_q>``, shape (n_p1, 3 n_p2)."""
        rule = tet_rule(2)
        G = self.p2_grads(rule)
        local = np.einsum("cq,qj,cqad->cjda", self.cell_weights(rule), rule.bary, G)
        blocks = [self._scatter(local[:, :, d, :], self.p1_dofs, self.p2_dofs, (self.n_p1, self.n_p2))
                  for d in range(3)]
        return sp.hstack(blocks, format="csr")

    @cached_property
    def pressure_mass(self) -> sp.csr_matrix:
        rule = tet_rule(2)
        local = np.einsum("cq,qa,qb->cab", self.cell_weights(rule), rule.bary, rule.bary)
        return self._scatter(local, self.p1_dofs, self.p1_dofs, (self.n_p1, self.n_p1))

    @cached_property
    def velocity_means(self) -> sp.csr_matrix:
        """Rows ``<phi, e_k>``: the three component integrals, shape (3, 3 n_p2)."""
        w = np.asarray(self.scalar_mass.sum(axis=0)).ravel()
        return sp.block_diag([w[None, :]] * 3, format="csr")

    @cached_property
    def pressure_integrals(self) -> np.ndarray:
        return np.asarray(self.pressure_mass.sum(axis=0)).ravel()

    def mass_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply the inverse vector mass matrix (componentwise scalar solves)."""
        lu = self._factor("scalar_mass", lambda: factorize(self.scalar_mass))
        return np.concatenate([lu.solve(r) for r in rhs.reshape(3, self.n_p2)])

    def _factor(self, key, make):
        if key not in self._factor_cache:
            self._factor_cache[key] = make()
        return self._factor_cache[key]

    # ---------------------------------------------------------- trilinear

    def convection_residual(self, u: np.ndarray) -> np.ndarray:
        """``btilde(u, u, phi)`` for every velocity basis function."""
        rule = tet_rule(5)
        w = self.cell_weights(rule)
        phi = p2_values(rule.bary)
        G = self.p2_grads(rule)
        vals, grads = self.eval_velocity(u, rule)
        adv = np.einsum("cqi,cqbi->cqb", vals, G)  # u . grad phi_b
        conv = np.einsum("cqdi,cqi->cqd", grads, vals)  # (u . grad) u
        local = 0.5 * (-np.einsum("cq,cqd,cqb->cdb", w, vals, adv)
                       + np.einsum("cq,qb,cqd->cdb", w, phi, conv))
        out = np.zeros((3, self.n_p2))
        for d in range(3):
            np.add.at(out[d], self.p2_dofs, local[:, d, :])
        return out.ravel()

    def convection_jacobian(self, u: np.ndarray) -> sp.csr_matrix:
        """Derivative of ``u -> btilde(u, u, .)``: rows test (d, b), columns trial (c, a)."""
        rule = tet_rule(5)
        w = self.cell_weights(rule)
        phi = p2_values(rule.bary)
        G = self.p2_grads(rule)
        vals, grads = self.eval_velocity(u, rule)
        adv = np.einsum("cqi,cqbi->cqb", vals, G)
        eye = np.eye(3)
        t1 = np.einsum("zq,qa,zqd,zqbc->zdbca", w, phi, vals, G)
        t2 = np.einsum("zq,qa,zqb,dc->zdbca", w, phi, adv, eye)
        t3 = np.einsum("zq,qa,qb,zqdc->zdbca", w, phi, phi, grads)
        t4 = np.einsum("zq,qb,zqa,dc->zdbca", w, phi, adv, eye)
        local = 0.5 * (-t1 - t2 + t3 + t4)
        nc = self.mesh.n_cells
        dofs = (np.arange(3)[None, :, None] * self.n_p2 + self.p2_dofs[:, None, :]).reshape(nc, 30)
        return self._scatter(local.reshape(nc, 30, 30), dofs, dofs, (self.n_velocity, self.n_velocity))

    # ----------------------------------------------------------- saddle solves

    def saddle_matrix(self, K: sp.spmatrix, fix_velocity_mean: bool) -> sp.csc_matrix:
        """``[[K, -B^T, (C^T)], [-B, 0, 0, e], [(C), 0, 0, 0], [0, e^T, 0, 0]]``."""
        B = self.divergence
        e = sp.csr_matrix(self.pressure_integrals[:, None])
        nv, npr = self.n_velocity, self.n_pressure
        rows = [[K, -B.T, None], [-B, None, e], [None, e.T, None]]
        if fix_velocity_mean:
            C = self.velocity_means
            rows[0].append(C.T)
            rows[1].append(None)
            rows[2].append(None)
            rows.append([C, None, None, None])
        M = sp.bmat(rows, format="csc")
        assert M.shape[0] == nv + npr + 1 + (3 if fix_velocity_mean else 0)
        return M

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nv, npr = self.n_velocity, self.n_pressure
        return x[:nv], x[nv:nv + npr]

    def stokes_solve(self, nu: float, load: np.ndarray, means: np.ndarray | None = None,
                     method: str = "direct") -> tuple[np.ndarray, np.ndarray]:
        """Discrete periodic Stokes problem ``nu <grad u, grad v> - <p, div v> = load(v)``."""
        means = np.zeros(3) if means is None else np.asarray(means, dtype=float)
        rhs = np.concatenate([load, np.zeros(self.n_pressure + 1), means])
        key = ("stokes", float(nu))
        if method == "direct":
            lu = self._factor(key, lambda: factorize(self.saddle_matrix(nu * self.stiffness, True)))
            x = lu.solve(rhs)
        else:
            x = solve_linear(self.saddle_matrix(nu * self.stiffness, True), rhs, method)
        return self.split(x)

    # ------------------------------------------------------------- helpers

    def div_residuals(self, u: np.ndarray) -> np.ndarray:
        """``<div u, psi_q>`` for every pressure basis function."""
        return self.divergence @ u

    def discrete_laplacian(self, u: np.ndarray) -> np.ndarray:
        return -self.mass_solve(self.stiffness @ u)

    def discrete_gradient(self, p: np.ndarray) -> np.ndarray:
        return -self.mass_solve(self.divergence.T @ p)

    def inf_sup_constant(self) -> float:
        """Discrete inf-sup constant w.r.t. the W^{1,2} velocity and L^2 pressure norms (dense)."""
        K = (self.stiffness + self.mass).toarray()
        B = self.divergence.toarray()
        Mp = self.pressure_mass.toarray()
        S = B @ np.linalg.solve(K, B.T)
        # restrict to mean-free pressures
        e = self.pressure_integrals
        Q, _ = np.linalg.qr(np.column_stack([e, np.eye(len(e))[:, 1:]]))
        Z = Q[:, 1:]
        from scipy.linalg import eigh
        vals = eigh(Z.T @ S @ Z, Z.T @ Mp @ Z, eigvals_only=True)
        return float(np.sqrt(max(vals.min(), 0.0)))


def factorize(A: sp.spmatrix):
    """SuperLU with a symmetric-pattern ordering (all our systems have symmetric sparsity)."""
    return spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A")


def solve_linear(A: sp.spmatrix, b: np.ndarray, method: str = "direct") -> np.ndarray:
    """Sparse solve; ``direct`` uses SuperLU, ``iterative`` GMRES with an ILU preconditioner."""
    if method == "direct":
        return factorize(A).solve(b)
    if method == "iterative":
        ilu = spla.spilu(sp.csc_matrix(A), drop_tol=1e-5, fill_factor=20)
        prec = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.gmres(A, b, M=prec, rtol=1e-13, atol=0.0, restart=200, maxiter=2000)
        if info != 0:
            raise RuntimeError(f"GMRES did not converge (info={info})")
        return x
    raise ValueError(f"unknown linear solver {method!r}")


# ----------------------------------------------------------------- norms

def norm(space: TaylorHood, f, which: str) -> float:
    """L2 / L3 / L6 / W12 norm of a velocity FeFunction, coefficient array, QuadField or analytic field.

    L2 and W12 of FE functions are exact; L3/L6 and anything analytic use
    the degree-10 rule (quadrature-approximate).
    """
    if which not in NORMS:
        raise ValueError(f"unknown norm {which!r}; expected one of {NORMS}")
    if isinstance(f, FeFunction):
        if f.space != "velocity":
            raise ValueError("norm() expects velocity fields")
        f = f.coefficients
    if isinstance(f, np.ndarray):
        if which == "L2":
            return float(np.sqrt(max(f @ (space.mass @ f), 0.0)))
        if which == "W12":
            return float(np.sqrt(max(f @ (space.mass @ f) + f @ (space.stiffness @ f), 0.0)))
        return space.velocity_quad(f).lp_norm(int(which[1:]))
    if isinstance(f, QuadField):
        if which == "W12":
            raise ValueError("W12 norm needs gradients; pass a FE or analytic field")
        return f.l2_norm() if which == "L2" else f.lp_norm(int(which[1:]))
    # analytic
    x = space.points()
    qf = space.quad_field(f(x))
    if which == "W12":
        g = f.grad(x)
        w = space.cell_weights(space.rule)
        return float(np.sqrt(qf.l2_norm() ** 2 + np.sum(w * np.sum(g**2, axis=(2, 3)))))
    return qf.l2_norm() if which == "L2" else qf.lp_norm(int(which[1:]))


def difference_norms(space: TaylorHood, field, u: np.ndarray, which=("L2", "L3")) -> dict:
    """Norms of ``field - u_h`` for an analytic field, via the degree-10 rule."""
    diff = space.sample(field) - space.velocity_quad(u)
    return {k: (diff.l2_norm() if k == "L2" else diff.lp_norm(int(k[1:]))) for k in which}


def gradient_error(space: TaylorHood, field, u: np.ndarray) -> float:
    x = space.points()
    _, gu = space.eval_velocity(u)
    w = space.cell_weights(space.rule)
    return float(np.sqrt(np.sum(w * np.sum((field.grad(x) - gu) ** 2, axis=(2, 3)))))


def trilinear(space: TaylorHood, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
    """``b(u, v, w) = -<u (x) v, grad w>``, exact (degree-5 rule)."""
    rule = tet_rule(5)
    uq, _ = space.eval_velocity(u, rule)
    vq, _ = space.eval_velocity(v, rule)
    _, gw = space.eval_velocity(w, rule)
    wts = space.cell_weights(rule)
    return float(-np.einsum("cq,cqi,cqj,cqji->", wts, uq, vq, gw))


def trilinear_skew(space: TaylorHood, u, v, w) -> float:
    """Antisymmetrised convection ``(b(u, v, w) - b(u, w, v)) / 2``."""
    u, v, w = (x.coefficients if isinstance(x, FeFunction) else x for x in (u, v, w))
    return 0.5 * (trilinear(space, u, v, w) - trilinear(space, u, w, v))


def l2_project(space: TaylorHood, field) -> FeFunction:
    """L2 projection of an analytic vector field onto the velocity space."""
    load = space.sample(field).load_vector()
    return FeFunction("velocity", space.mass_solve(load))


def discrete_stokes_projection(space: TaylorHood, u0, method: str = "direct") -> tuple[FeFunction, FeFunction]:
    """Discrete Stokes projection of ``(u0, 0)`` with the component means of ``u0``.

    Solves ``<grad P u, grad v> - <P pi, div v> = <grad u0, grad v>`` on the
    discretely divergence-free subspace; ``u0`` must provide ``grad``.
    """
    x = space.points()
    w = space.cell_weights(space.rule)
    G = space.p2_grads(space.rule)
    g0 = u0.grad(x)
    local = np.einsum("cq,cqdk,cqak->cda", w, g0, G)
    load = np.zeros((3, space.n_p2))
    for d in range(3):
        np.add.at(load[d], space.p2_dofs, local[:, d, :])
    means = space.sample(u0).mean()
    u, p = space.stokes_solve(1.0, load.ravel(), means, method)
    return FeFunction("velocity", u), FeFunction("pressure", p)
