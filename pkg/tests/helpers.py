"""Independent point evaluation of P2 fields on the Kuhn mesh (used by oracles)."""

import itertools

import numpy as np

from nsverify.fem import p2_grad_coeffs, p2_values

_PERM_INDEX = {p: i for i, p in enumerate(itertools.permutations(range(3)))}


def locate(mesh, x):
    """Cell ids and barycentric coordinates of points x (m, 3) in the torus."""
    n = mesh.n
    y = np.mod(x, 1.0) * n
    base = np.minimum(np.floor(y).astype(int), n - 1)
    r = y - base
    order = np.argsort(-r, axis=1, kind="stable")
    perm = np.array([_PERM_INDEX[tuple(o)] for o in order])
    cell = ((base[:, 0] * n + base[:, 1]) * n + base[:, 2]) * 6 + perm
    rs = np.take_along_axis(r, order, axis=1)
    bary = np.column_stack([1.0 - rs[:, 0], rs[:, 0] - rs[:, 1], rs[:, 1] - rs[:, 2], rs[:, 2]])
    return cell, bary


def evaluate(space, u, x):
    """Values (m, 3) and gradients (m, 3, 3) of a velocity coefficient vector at points x."""
    cell, bary = locate(space.mesh, x)
    loc = space.velocity_local(u)[cell]  # (m, 3, 10)
    vals = np.einsum("ma,mda->md", p2_values(bary), loc)
    coeff = np.einsum("maj,mda->mdj", p2_grad_coeffs(bary), loc)
    grads = np.einsum("mdj,mjk->mdk", coeff, space.mesh.bary_grads[cell])
    return vals, grads


def manufactured_stokes(space, nu=1.0, amplitude=1.0):
    """Discrete periodic Stokes solve for exact u = Taylor-Green, pi = 0; returns (error, breakdown)."""
    from nsverify import fields
    from nsverify.fem import gradient_error
    from nsverify.stokes_estimator import estimate

    tg = fields.TaylorGreen(amplitude)
    F = space.sample(lambda x: -nu * tg.laplacian(x))
    u, p = space.stokes_solve(nu, F.load_vector())
    error = gradient_error(space, tg, u) + float(np.sqrt(p @ (space.pressure_mass @ p)))
    return error, estimate(space, u, p, F, nu)


def _quad_l2(space, u):
    # independent of the mass matrix: degree-10 quadrature of |u|^2
    return space.velocity_quad(u).l2_norm()


def recompute_residual_terms(traj, i, c):
    """Every residual term (forcing term excluded) from first principles, bypassing the ledger code."""
    from nsverify.stokes_estimator import estimate, negative_norm_w12

    s, tau, nu = traj.space, traj.tau, traj.nu
    F = [traj.strong_data(j) for j in range(len(traj))]
    du, dp = (traj.u(i) - traj.u(i - 1)) / tau, (traj.p(i) - traj.p(i - 1)) / tau
    t1 = c.c_e2 * estimate(s, du, dp, -((F[i] - F[i - 1]) / tau), nu, c).H0
    if i == 1:
        vals, grads = s.eval_velocity(traj.u(0))
        nonlin = 0.5 * np.einsum("cqdk,cqk->cqd", grads, vals) + 0.5 * (
            np.einsum("cqdk,cqk->cqd", grads, vals) + np.trace(grads, axis1=2, axis2=3)[..., None] * vals)
        g = s.velocity_quad(du) + s.quad_field(nonlin) - F[0] - traj.forcing_at(0)
        t2 = c.c_e2 * g.l2_norm()
    else:
        t2 = c.c_e2 * _quad_l2(s, (traj.u(i) - 2 * traj.u(i - 1) + traj.u(i - 2)) / tau)
    t3 = c.c_e2 * c.c_e1 / nu**2 * c.c_P**2 * negative_norm_w12(s, F[i] - F[i - 1], c) ** 2
    t4 = 0.0
    for j in (i - 1, i):
        b = estimate(s, traj.u(j), traj.p(j), -F[j], nu, c)
        _, gu = s.eval_velocity(traj.u(j))
        w12 = np.sqrt(_quad_l2(s, traj.u(j)) ** 2 + np.sum(s.cell_weights(s.rule) * np.sum(gu**2, axis=(2, 3))))
        t4 += c.c_e1 * (c.c_e2 + c.c_e1) * b.H1 * (2 * w12 + b.H1)
    return np.array([t1, t2, t3, t4, 0.0])


def gronwall_instances(count, seed, points=401):
    """Seeded instances ``(grid, g1, g2, alpha, A, B1, B2)`` meeting the lemma's hypothesis and condition.

    ``g1`` solves the hypothesis with equality (trapezoidal integrals), the worst
    case the lemma allows: for the coupling ``K = B1 S^(2/3) + B2 S^(1/3)`` with
    ``S = sup g1`` the linear Volterra equation is marched exactly, and ``S`` is
    iterated up to its least fixed point.
    """
    rng = np.random.default_rng(seed)
    T = rng.uniform(0.05, 2.0, count)
    s = np.linspace(0.0, 1.0, points)
    grid = T[:, None] * s[None, :]
    h = np.diff(grid, axis=1)
    a0, a1, om = rng.uniform(0, 3, count), rng.uniform(0, 3, count), rng.uniform(0.5, 20, count)
    alpha = a0[:, None] + a1[:, None] * np.sin(om[:, None] * grid) ** 2
    alpha_int = np.sum(0.5 * h * (alpha[:, 1:] + alpha[:, :-1]), axis=1)
    M = np.exp(alpha_int)
    A = 10.0 ** rng.uniform(-12, -2, count)
    target = rng.uniform(0.05, 1.0, count)
    split = rng.uniform(0, 1, count)
    B1 = target * split / (8 * (1 + T) * (8 * A * M) ** (2 / 3))
    B2 = target * (1 - split) / (8 * (1 + T) * (8 * A * M) ** (1 / 3))
    g2 = (A * rng.uniform(0, 0.5, count) / T)[:, None] * (1 + np.cos(rng.uniform(1, 9, count)[:, None] * grid))

    S = A.copy()
    for _ in range(200):
        K = B1 * S ** (2 / 3) + B2 * S ** (1 / 3)
        g1 = np.empty_like(grid)
        g1[:, 0] = A
        # g1_k + G2_k = A + sum trap(alpha g1) + K sum trap(g1 + g2), solved for g1_k
        acc = np.zeros(count)
        G2 = np.zeros(count)
        for k in range(1, points):
            hk = h[:, k - 1]
            G2 += 0.5 * hk * (g2[:, k] + g2[:, k - 1])
            known = acc + 0.5 * hk * (alpha[:, k - 1] * g1[:, k - 1] + K * (g1[:, k - 1] + g2[:, k - 1] + g2[:, k]))
            g1[:, k] = (A + known - G2) / (1 - 0.5 * hk * (alpha[:, k] + K))
            acc += 0.5 * hk * (alpha[:, k - 1] * g1[:, k - 1] + alpha[:, k] * g1[:, k]
                               + K * (g1[:, k - 1] + g1[:, k] + g2[:, k - 1] + g2[:, k]))
        S_new = g1.max(axis=1)
        if np.all(np.abs(S_new - S) <= 1e-15 * S_new):
            break
        S = np.maximum(S, S_new)
    return [(grid[j], g1[j], g2[j], alpha[j], A[j], B1[j], B2[j]) for j in range(count)]
