"""Residual a posteriori estimators for the periodic Stokes problem.

For a discrete solution ``(u_h, pi_h)`` of

    nu <grad u, grad v> - <pi, div v> = <F, v>,    div u = 0,

the per-cell quantities are the element residual ``F + nu Lap u_h - grad pi_h``,
the divergence ``div u_h``, the normal jumps of ``nu grad u_h - pi_h I``
across the faces of the cell, and the oscillation ``F - F_K``. They are
aggregated into ``H0`` (L2 error bound) and ``H1`` (W^{1,2} error bound).

A Poisson solve gives a computable upper bound for W^{-1,2} norms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .constants import ConstantsTable, default_table
from .fem import QuadField, TaylorHood, factorize, p2_grad_coeffs
from .mesh import LOCAL_FACES
from .quadrature import tet_rule, tri_rule

MEAN_TOL = 1e-8
FACE_DEGREE = 6


class NotMeanFree(ValueError):
    pass


@dataclass
class EstimatorBreakdown:
    h: np.ndarray  # h_K
    element_residual: np.ndarray  # ||F + nu Lap u_h - grad pi_h||_{L2(K)}
    divergence: np.ndarray  # ||div u_h||_{L2(K)}
    face_jump: np.ndarray  # per face ||[(nu grad u_h - pi_h I) n]||_{L2(e)}
    oscillation: np.ndarray  # ||F - F_K||_{L2(K)}
    mu_bar: np.ndarray
    eta: np.ndarray
    H0: float
    H1: float
    constants: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "h_K", "element_residual", "divergence", "oscillation", "mu_bar", "eta"])
            for k in range(self.h.size):
                w.writerow([k, repr(float(self.h[k])), repr(float(self.element_residual[k])),
                            repr(float(self.divergence[k])), repr(float(self.oscillation[k])),
                            repr(float(self.mu_bar[k])), repr(float(self.eta[k]))])


# ------------------------------------------------------------------ faces

@lru_cache(maxsize=8)
def _face_bary(k: int, degree: int) -> np.ndarray:
    """Cell barycentric coordinates of the face rule on local face ``k``, (nq, 4)."""
    rule = tri_rule(degree)
    out = np.zeros((rule.size, 4))
    out[:, list(LOCAL_FACES[k])] = rule.bary
    return out


def _side_gradients(space: TaylorHood, local: np.ndarray, cells: np.ndarray, faces_k: np.ndarray,
                    degree: int) -> np.ndarray:
    """Gradients of P2 fields (local coeffs (n_cells, m, 10)) at face points, (nf, nq, m, 3)."""
    nq = tri_rule(degree).size
    out = np.empty((cells.size, nq, local.shape[1], 3))
    for k in range(4):
        sel = faces_k == k
        if not sel.any():
            continue
        C = p2_grad_coeffs(_face_bary(k, degree))  # (nq, 10, 4)
        c = cells[sel]
        coeff = np.einsum("qaj,fma->fqmj", C, local[c])
        out[sel] = np.einsum("fqmj,fjd->fqmd", coeff, space.mesh.bary_grads[c])
    return out


def normal_gradient_jumps(space: TaylorHood, local: np.ndarray, degree: int = FACE_DEGREE) -> np.ndarray:
    """``||[grad w n]||_{L2(e)}`` per face for P2 fields ``w`` given by local coeffs (n_cells, m, 10).

    The jump is summed over the ``m`` components. Both neighbours list the
    face vertices in the same order, so the face points coincide.
    """
    mesh = space.mesh
    gm = _side_gradients(space, local, mesh.face_cells[:, 0], mesh.face_local[:, 0], degree)
    gp = _side_gradients(space, local, mesh.face_cells[:, 1], mesh.face_local[:, 1], degree)
    jump = np.einsum("fqmd,fd->fqm", gm - gp, mesh.face_normals)
    w = 2.0 * mesh.face_areas[:, None] * tri_rule(degree).weights[None, :]
    return np.sqrt(np.einsum("fq,fqm->f", w, jump**2))


def _per_cell_face_sum(space: TaylorHood, per_face: np.ndarray) -> np.ndarray:
    """Sum a face quantity into both neighbouring cells."""
    out = np.zeros(space.mesh.n_cells)
    np.add.at(out, space.mesh.face_cells[:, 0], per_face)
    np.add.at(out, space.mesh.face_cells[:, 1], per_face)
    return out


def check_mean_free(F: QuadField, what: str = "data") -> None:
    mean = F.mean()
    scale = max(1.0, F.l2_norm())
    if np.abs(mean).max() > MEAN_TOL * scale:
        raise NotMeanFree(f"{what} is not mean-free (mean {mean}); the periodic problem is ill-posed")


# -------------------------------------------------------------- estimator

def estimate(space: TaylorHood, u: np.ndarray, p: np.ndarray, F: QuadField, nu: float,
             constants: ConstantsTable | None = None) -> EstimatorBreakdown:
    """Estimators for the Stokes solution with data ``F`` approximated by ``(u, p)``."""
    constants = constants or default_table()
    check_mean_free(F, "Stokes data")
    mesh = space.mesh
    h = mesh.h_cell

    R = F + (nu * space.velocity_laplacian(u) - space.pressure_grad(p))[:, None, :]
    element = np.sqrt(R.cell_l2_squared())

    rule = tet_rule(4)
    _, g = space.eval_velocity(u, rule)
    div = np.trace(g, axis1=2, axis2=3)
    divergence = np.sqrt(np.einsum("cq,cq->c", space.cell_weights(rule), div**2))

    # pi_h is continuous, so only nu grad u_h jumps across faces
    jumps = nu * normal_gradient_jumps(space, space.velocity_local(u))

    osc = np.sqrt((F - F.cell_means()[:, None, :]).cell_l2_squared())

    he = mesh.h_face
    mu_bar2 = h**4 * element**2 + h**2 * divergence**2 + _per_cell_face_sum(space, he**3 * jumps**2)
    eta2 = h**2 * element**2 + divergence**2 + _per_cell_face_sum(space, he * jumps**2)
    H0 = constants.c_tilde * float(np.sqrt(np.sum(mu_bar2 + h**4 * osc**2)))
    H1 = float(np.sqrt(constants.c_H1**2 * np.sum(eta2) + H0**2))
    return EstimatorBreakdown(h, element, divergence, jumps, osc, np.sqrt(mu_bar2), np.sqrt(eta2), H0, H1,
                              {"c_tilde": constants.c_tilde, "c_H1": constants.c_H1, "nu": nu})


# ----------------------------------------------------------- W^{-1,2} bound

@dataclass
class NegativeNormBound:
    discrete: float  # ||grad phi_h||_{L2}
    estimator: float  # bound on ||grad (phi - phi_h)||_{L2}

    @property
    def total(self) -> float:
        return self.discrete + self.estimator


def _poisson_factor(space: TaylorHood):
    def make():
        m = np.asarray(space.scalar_mass.sum(axis=0)).ravel()
        S = sp.bmat([[space.scalar_stiffness, sp.csr_matrix(m[:, None])],
                     [sp.csr_matrix(m[None, :]), None]], format="csc")
        return factorize(S)
    return space._factor("poisson", make)


def negative_norm_w12(space: TaylorHood, a: QuadField, constants: ConstantsTable | None = None,
                      detail: bool = False):
    """Upper bound on ``||a||_{W^{-1,2}}`` for mean-free ``a`` via componentwise periodic Poisson solves.

    ``||a||_{-1} <= ||grad phi_h|| + c_H1 (sum_K h_K^2 ||a + Lap phi_h||_K^2 + sum_e h_e ||[grad phi_h n]||_e^2)^{1/2}``
    """
    constants = constants or default_table()
    check_mean_free(a, "negative-norm argument")
    load = a.load_vector().reshape(3, space.n_p2)
    lu = _poisson_factor(space)
    phi = np.stack([lu.solve(np.append(load[d], 0.0))[:-1] for d in range(3)])
    discrete = float(np.sqrt(sum(phi[d] @ (space.scalar_stiffness @ phi[d]) for d in range(3))))

    local = phi[:, space.p2_dofs].transpose(1, 0, 2)  # (cells, 3, 10)
    lap = np.einsum("cda,ca->cd", local, space.p2_laplacians)
    res = a + lap[:, None, :]
    mesh = space.mesh
    jumps = normal_gradient_jumps(space, local)
    est = constants.c_H1 * float(np.sqrt(np.sum(mesh.h_cell**2 * res.cell_l2_squared())
                                         + np.sum(mesh.h_face * jumps**2)))
    out = NegativeNormBound(discrete, est)
    return out if detail else out.total
