"""Assemble the conditional existence criterion from a trajectory and its residual ledger.

For every grid horizon ``t_n`` the quantities ``A_n``, ``int alpha``, ``M_n``,
``B1`` and ``B2_n`` are accumulated slab by slab and handed to
:func:`nsverify.gronwall.evaluate`, which is the single place where the
condition ``8 (1 + T) (B1 (8AM)^(2/3) + B2 (8AM)^(1/3)) <= 1`` is decided.
Time integrals over a slab use the endpoint maximum of the affine
interpolants, a rigorous over-estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gronwall
from .constants import USER_CERTIFIED, ConstantsTable, default_table
from .fem import difference_norms
from .ns_scheme import Trajectory
from .residual_bound import NodeEstimates, ResidualLedger, build_ledger, node_estimates

BETA1 = 2.0 / 3.0
BETA2 = 1.0 / 3.0


class NotCertified(RuntimeError):
    pass


@dataclass
class EstimateLedger:
    tau: float
    nu: float
    times: np.ndarray
    nodes: list[NodeEstimates]
    initial_error_L2: float  # ||u0 - u_h^0||_{L2}
    initial_error_L3: float
    residual: ResidualLedger
    flags: list[str] = field(default_factory=list)
    c_e1: float = 24.0

    @property
    def e0_L2(self) -> float:
        return self.initial_error_L2 + self.nodes[0].H0

    @property
    def e0_L3(self) -> float:
        return self.initial_error_L3 + self.c_e1 * self.nodes[0].H1

    def uhat_L6(self, i: int) -> float:
        return self.c_e1 * self.nodes[i].H1 + self.nodes[i].u_L6

    def uhat_H1(self, i: int) -> float:
        return self.nodes[i].H1 + self.nodes[i].u_W12

    @property
    def n_slabs(self) -> int:
        return len(self.residual)


def build_estimate_ledger(traj: Trajectory, u0, forcing_mode: str, constants: ConstantsTable | None = None,
                          samples: int = 33, initial_errors: tuple[float, float] | None = None) -> EstimateLedger:
    """Estimators for every node, the initial-error bounds and the residual ledger.

    ``initial_errors`` may carry certified values of ``||u0 - u_h^0||`` in L2 and
    L3; otherwise they are computed by quadrature and flagged.
    """
    constants = constants or default_table()
    flags = ["quadrature-approximate: L3/L6 norms use a fixed degree-10 rule",
             "poisson-estimator-constant: c_H1 reused for the Poisson estimator",
             "user-certified constants: " + ", ".join(USER_CERTIFIED)]
    if initial_errors is None:
        d = difference_norms(traj.space, u0, traj.u(0), ("L2", "L3"))
        initial_errors = (d["L2"], d["L3"])
        flags.append("quadrature-approximate: initial error against analytic u0")
    nodes = [node_estimates(traj, i, constants) for i in range(len(traj))]
    residual = build_ledger(traj, forcing_mode, constants, samples)
    if any("sampled-forcing" in r.flags for r in residual.rows):
        flags.append("sampled-forcing: time interpolation error of f sampled, non-rigorous")
    return EstimateLedger(traj.tau, traj.nu, traj.times, nodes, float(initial_errors[0]),
                          float(initial_errors[1]), residual, flags, constants.c_e1)


def _check_upto(ledger: EstimateLedger, n: int) -> None:
    if n < 0 or n > ledger.n_slabs or len(ledger.nodes) < n + 1:
        raise ValueError(f"ledger covers {ledger.n_slabs} slabs; cannot accumulate up to slab {n}")


def accumulate_A(ledger: EstimateLedger, constants: ConstantsTable, nu: float, n: int) -> float:
    _check_upto(ledger, n)
    c3 = constants.c_Pi2**3 / 3.0 * (1.0 + 16.0 / nu**1.5)
    c2 = 0.5 + 1.0 / nu
    A = ledger.e0_L3**3 / 3.0 + ledger.e0_L2**2 / 2.0
    for row in ledger.residual.rows[:n]:
        A += ledger.tau * (c3 * row.total_w13**3 + c2 * row.total_w12**2)
    return A


def alpha_slab(m: float, nu: float, c_e1: float) -> float:
    return 4.0 + nu / 3.0 + 4.0 * c_e1 / nu * m**2 + 108.0 * c_e1**2 / nu**3 * m**4


def accumulate_alpha(ledger: EstimateLedger, constants: ConstantsTable, nu: float, n: int) -> float:
    _check_upto(ledger, n)
    total = 0.0
    for i in range(1, n + 1):
        m = max(ledger.uhat_L6(i - 1), ledger.uhat_L6(i))
        total += ledger.tau * alpha_slab(m, nu, constants.c_e1)
    return total


def compute_B(constants: ConstantsTable, nu: float, ledger: EstimateLedger | None = None,
              n: int | None = None, sup_uhat_H1: float | None = None) -> tuple[float, float]:
    c = constants
    common = c.c_Pi1**2 * (1.0 + 2.0 / nu) / (2.0 * nu)
    B1 = 3.0 ** (8.0 / 3.0) * common * c.c_e1**2
    if sup_uhat_H1 is None:
        sup_uhat_H1 = 0.0 if ledger is None else max(ledger.uhat_H1(i) for i in range(n + 1))
    B2 = 3.0 ** (7.0 / 3.0) * common * c.c_e1**4 * sup_uhat_H1**2
    return B1, B2


@dataclass
class HorizonRow:
    t: float
    A: float
    alphaInt: float
    M: float
    B1: float
    B2: float
    lhs: float
    satisfied: bool


@dataclass
class VerificationReport:
    constants: dict
    mesh: dict
    tau: float
    nu: float
    rows: list[HorizonRow]
    certifiedT: float | None
    errorBound: float | None
    flags: list[str]
    failingBreakdown: dict | None = None
    stabilityBound: float | None = None
    configHash: str | None = None

    @property
    def certified(self) -> bool:
        return self.certifiedT is not None and self.certifiedT > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def minimal_A_factor(A: float, M: float, T: float, B1: float, B2: float) -> float:
    """Factor by which ``A`` must shrink (others fixed) for the condition to hold."""
    if A <= 0:
        return 1.0
    if not math.isfinite(M):
        return math.inf
    rhs = 1.0 / (8.0 * (1.0 + T))
    # x = (8 A M)^(1/3) solves B1 x^2 + B2 x = rhs
    if B1 > 0:
        x = 2.0 * rhs / (B2 + math.sqrt(B2 * B2 + 4.0 * B1 * rhs))
    elif B2 > 0:
        x = rhs / B2
    else:
        return 1.0
    A_star = x**3 / (8.0 * M)
    return max(1.0, A / A_star)


def _failing_breakdown(ledger: EstimateLedger, constants: ConstantsTable, nu: float, n: int,
                       row: HorizonRow, verdict: gronwall.GronwallVerdict) -> dict:
    c3 = constants.c_Pi2**3 / 3.0 * (1.0 + 16.0 / nu**1.5)
    c2 = 0.5 + 1.0 / nu
    slabs = ledger.residual.rows[:n]
    group_totals = [float(sum(ledger.tau * r.terms[k] for r in slabs)) for k in range(5)]
    parts = {
        "initialL3": ledger.e0_L3**3 / 3.0,
        "initialL2": ledger.e0_L2**2 / 2.0,
        "residualW13": float(sum(ledger.tau * c3 * r.total_w13**3 for r in slabs)),
        "residualW12": float(sum(ledger.tau * c2 * r.total_w12**2 for r in slabs)),
    }
    return {
        "t": row.t,
        "dominantTerm": "B1" if verdict.term1 >= verdict.term2 else "B2",
        "termB1": verdict.term1,
        "termB2": verdict.term2,
        "minimalAReduction": minimal_A_factor(row.A, row.M, row.t, row.B1, row.B2),
        "Acomponents": parts,
        "dominantAComponent": max(parts, key=parts.get),
        "residualTermIntegrals": group_totals,
        "dominantResidualTerm": int(np.argmax(group_totals)) + 1 if slabs else None,
    }


def horizon_rows(ledger: EstimateLedger, constants: ConstantsTable, nu: float):
    B1 = compute_B(constants, nu)[0]
    out = []
    for n in range(1, ledger.n_slabs + 1):
        A = accumulate_A(ledger, constants, nu, n)
        alpha = accumulate_alpha(ledger, constants, nu, n)
        _, B2 = compute_B(constants, nu, ledger, n)
        t = float(ledger.times[n])
        verdict = gronwall.evaluate(gronwall.GronwallInput(t, A, B1, B2, BETA1, BETA2, alpha))
        out.append((n, HorizonRow(t, A, alpha, verdict.M, B1, B2, verdict.condition_lhs, verdict.satisfied),
                    verdict))
    return out


def certify(ledger: EstimateLedger, constants: ConstantsTable | None = None, mesh_info: dict | None = None,
            config_hash: str | None = None) -> VerificationReport:
    constants = constants or default_table()
    nu = ledger.nu
    scan = horizon_rows(ledger, constants, nu)
    rows = [r for _, r, _ in scan]
    satisfied = [(n, r, v) for n, r, v in scan if r.satisfied]
    certified_T = satisfied[-1][1].t if satisfied else None
    report = VerificationReport(
        constants=constants.to_dict(), mesh=mesh_info or {}, tau=ledger.tau, nu=nu, rows=rows,
        certifiedT=certified_T, errorBound=None, flags=list(ledger.flags), configHash=config_hash,
    )
    if satisfied:
        n, row, verdict = satisfied[-1]
        report.stabilityBound = verdict.bound
        report.errorBound = conditional_error_bound(report, ledger, constants)
    unsatisfied = [(n, r, v) for n, r, v in scan if not r.satisfied]
    if unsatisfied:
        n, row, verdict = unsatisfied[0]
        report.failingBreakdown = _failing_breakdown(ledger, constants, nu, n, row, verdict)
    return report


def error_bound_formula(A: float, M: float, sup_H0: float, sup_H1: float, nu: float, c_e1: float) -> float:
    AM = A * M if A > 0 else 0.0
    return (16.0 * AM + sup_H0**2 + 2.0 * nu * sup_H1**2
            + 4.0 / 3.0 * c_e1**1.5 * sup_H0**1.5 * sup_H1**1.5)


def conditional_error_bound(report: VerificationReport, ledger: EstimateLedger,
                            constants: ConstantsTable | None = None) -> float:
    """Error bound for the exact solution on ``[0, certifiedT]``; raises if nothing was certified."""
    constants = constants or default_table()
    if report.certifiedT is None:
        raise NotCertified("the existence criterion is not satisfied on any grid horizon")
    k = max(i for i, r in enumerate(report.rows) if r.satisfied and r.t == report.certifiedT)
    row = report.rows[k]
    n = k + 1
    sup_H0 = max(ledger.nodes[i].H0 for i in range(n + 1))
    sup_H1 = max(ledger.nodes[i].H1 for i in range(n + 1))
    return error_bound_formula(row.A, row.M, sup_H0, sup_H1, report.nu, constants.c_e1)
