"""Acceptance criteria; each test records one PASS/FAIL line shown in the terminal summary."""

import json
import math
from pathlib import Path

import mpmath
import numpy as np
import pytest

from conftest import get_space
from helpers import gronwall_instances, manufactured_stokes, recompute_residual_terms
from nsverify import cli, fields, gronwall, ns_scheme, ode_verify
from nsverify.constants import default_table, riesz_cp
from nsverify.fem import norm, trilinear_skew
from nsverify.residual_bound import build_ledger
from nsverify.stokes_estimator import negative_norm_w12
from nsverify.verifier import certify, error_bound_formula
from spectral_oracle import sample_projection_ratio

RESULTS: list[str] = []
BASELINE = Path(__file__).parent / "baselines" / "tiny_baseline.json"

TOL = {
    "c_P": 1e-12,
    "ode_A_factor": 1.8,
    "gronwall_slack": -1e-8,
    "leray_L2": 1 + 1e-8,
    "leray_L3": 14.0,
    "eta_slope": (0.7, 1.3),
    "H0_slope": (1.6, 2.4),
    "consistency": 1e-9,
    "skew": 1e-12,
    "divergence": 1e-10,
    "negnorm_rel": 0.10,
    "ledger_rel": 1e-12,
    "baseline_rel": 1e-9,
    "error_bound_rel": 1e-12,
}


def record(label: str, ok: bool, detail: str) -> None:
    RESULTS.append(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def slope(h, values):
    return float(np.polyfit(np.log(h), np.log(values), 1)[0])


# ---------------------------------------------------------------- 1


def test_criterion_1_constants():
    t = default_table()
    exact = float(mpmath.sqrt(4 * mpmath.pi**2 + 1) / (2 * mpmath.pi))
    ok = ((t.c_e1, t.c_e2, t.c_Pi1, t.c_Pi2) == (24, 22, 14, 35) and abs(t.c_P - exact) <= TOL["c_P"]
          and riesz_cp(3) == 4 and riesz_cp(6) == 10)
    record("criterion 1 constants", ok, f"c_P={t.c_P!r} riesz(3)={riesz_cp(3)} riesz(6)={riesz_cp(6)}")


# ---------------------------------------------------------------- 2


def test_criterion_2_ode_soundness():
    traj = ode_verify.euler_solve(0.1, 0.01, 50)
    cert = ode_verify.certify(traj)
    t = np.linspace(0.0, 0.5, 200_001)
    err = float(np.max((ode_verify.exact_solution(0.1, t) - traj.interpolant(t)) ** 2))
    half = ode_verify.certify(ode_verify.euler_solve(0.1, 0.005, 100))
    factor = cert.A / half.A
    ok = cert.satisfied and err <= 2 * cert.A * cert.M and factor >= TOL["ode_A_factor"]
    record("criterion 2 ode soundness", ok,
           f"satisfied={cert.satisfied} sup err^2={err:.3e} <= 2AM={2 * cert.A * cert.M:.3e}; A ratio={factor:.3f}")


# ---------------------------------------------------------------- 3


def test_criterion_3_gronwall_oracle():
    worst, hyp, cond = math.inf, True, True
    for grid, g1, g2, alpha, A, B1, B2 in gronwall_instances(1000, seed=20240611):
        a_int = float(np.sum(0.5 * np.diff(grid) * (alpha[1:] + alpha[:-1])))
        data = gronwall.GronwallInput(float(grid[-1]), A, B1, B2, 2 / 3, 1 / 3, a_int)
        v = gronwall.evaluate(data)
        hyp &= gronwall.check_hypothesis(g1, g2, alpha, data, grid)
        cond &= v.satisfied
        lhs = g1.max() + float(np.sum(0.5 * np.diff(grid) * (g2[1:] + g2[:-1])))
        worst = min(worst, (v.bound - lhs) / v.bound)
    ok = hyp and cond and worst >= TOL["gronwall_slack"]
    record("criterion 3 gronwall oracle", ok, f"1000 instances, min relative slack {worst:.4f}")


# ---------------------------------------------------------------- 4


def test_criterion_4_leray_sampling():
    r2 = sample_projection_ratio(100, 3, 2, seed=4)
    r3 = sample_projection_ratio(100, 3, 3, seed=4)
    ok = r2 <= TOL["leray_L2"] and r3 < TOL["leray_L3"]
    record("criterion 4 leray sampling", ok, f"max L2 ratio {r2:.6f}, max L3 ratio {r3:.4f}")


# ---------------------------------------------------------------- 5

_STOKES = {}


def _stokes_levels():
    if not _STOKES:
        for n in (2, 4, 8):
            err, b = manufactured_stokes(get_space(n))
            _STOKES[n] = (err, float(np.sqrt(np.sum(b.eta**2))), b.H0, get_space(n).mesh.h)
    return _STOKES


@pytest.mark.slow
def test_criterion_5a_stokes_reliability():
    c = default_table().c_H1
    lv = _stokes_levels()
    ok = all(err <= c * eta for err, eta, _, _ in lv.values())
    detail = ", ".join(f"n={n}: {e:.4g} <= {c * eta:.4g}" for n, (e, eta, _, _) in lv.items())
    record("criterion 5a stokes reliability", ok, detail)


@pytest.mark.slow
def test_criterion_5b_eta_rate():
    lv = _stokes_levels()
    s = slope([v[3] for v in lv.values()], [v[1] for v in lv.values()])
    lo, hi = TOL["eta_slope"]
    record("criterion 5b eta rate", lo <= s <= hi, f"slope {s:.3f}, window [{lo}, {hi}]")


@pytest.mark.slow
def test_criterion_5c_H0_rate():
    lv = _stokes_levels()
    s = slope([v[3] for v in lv.values()], [v[2] for v in lv.values()])
    lo, hi = TOL["H0_slope"]
    record("criterion 5c H0 rate", lo <= s <= hi, f"slope {s:.3f}, window [{lo}, {hi}]")


# ---------------------------------------------------------------- 6


def test_criterion_6_consistency(tiny_run, manufactured_run):
    rng = np.random.default_rng(6)
    worst = [0.0, 0.0, 0.0]
    for traj in (tiny_run, manufactured_run, _baseline_traj()):
        s = traj.space
        for i in range(len(traj)):
            scale = 1.0 + norm(s, traj.u(i), "W12") ** 2 + np.linalg.norm(traj.p(i))
            u = traj.u(i)
            if i >= 1:
                for _ in range(20):
                    v = rng.standard_normal(s.n_velocity)
                    v /= np.linalg.norm(v)
                    worst[0] = max(worst[0], abs(ns_scheme.consistency_defect(traj, i, v)) / scale)
            worst[1] = max(worst[1], abs(trilinear_skew(s, u, u, u)) / scale)
            worst[2] = max(worst[2], float(np.abs(s.divergence @ u).max()) / scale)
    ok = worst[0] <= TOL["consistency"] and worst[1] <= TOL["skew"] and worst[2] <= TOL["divergence"]
    record("criterion 6 consistency", ok,
           f"galerkin {worst[0]:.2e}, skew {worst[1]:.2e}, divergence {worst[2]:.2e} (relative to scale)")


# ---------------------------------------------------------------- 7


@pytest.mark.slow
def test_criterion_7_negative_norm():
    exact = 1 / (2 * math.pi * math.sqrt(2))
    sine = lambda x: np.stack([np.sin(2 * np.pi * x[..., 0]), 0 * x[..., 0], 0 * x[..., 0]], -1)
    vals = {n: negative_norm_w12(get_space(n), get_space(n).sample(sine)) for n in (2, 4, 8)}
    above = all(v >= exact for v in vals.values())
    close = abs(vals[8] - exact) <= TOL["negnorm_rel"] * exact
    record("criterion 7 negative norm", above and close,
           "exact " + f"{exact:.6f}; " + ", ".join(f"n={n}: {v:.6f}" for n, v in vals.items()))


# ---------------------------------------------------------------- 8


def test_criterion_8_ledger_consistency(manufactured_run, space2):
    c = default_table()
    ledger = build_ledger(manufactured_run, "affine", c)
    worst = 0.0
    for row in ledger.rows:
        ref = recompute_residual_terms(manufactured_run, row.slab, c)
        nz = ref != 0
        worst = max(worst, float(np.max(np.abs(np.array(row.terms)[nz] - ref[nz]) / np.abs(ref[nz]))))
    zero = ns_scheme.run(space2, fields.Zero(), fields.ZeroForcing(), 0.1, 3, 1.0)
    zero_ok = all(t == 0.0 for r in build_ledger(zero, "zero").rows for t in r.terms)
    record("criterion 8 ledger consistency", worst <= TOL["ledger_rel"] and zero_ok,
           f"max relative deviation {worst:.2e}; zero ledger {zero_ok}")


# ---------------------------------------------------------------- 9

BASELINE_CONFIG = """mesh_n: {n}
tau: {tau}
T_final: 0.2
nu: 1.0
initial_data: {{id: taylor_green, amplitude: 1.0e-4}}
forcing: {{mode: zero, id: zero}}
"""

_BASE = {}


def _baseline_traj():
    if "traj" not in _BASE:
        cfg = cli.parse_config(BASELINE_CONFIG.format(n=4, tau=0.05))
        _BASE["result"] = cli.solve_and_estimate(cfg)
        _BASE["traj"] = _BASE["result"].traj
    return _BASE["traj"]


def _close(a, b, rel):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k], rel) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(_close(x, y, rel) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, (int, float)):
        return a == b or (math.isfinite(a) and abs(a - b) <= rel * abs(b))
    return a == b


@pytest.mark.slow
def test_criterion_9a_baseline(tmp_path):
    cfg = tmp_path / "baseline.yaml"
    cfg.write_text(BASELINE_CONFIG.format(n=4, tau=0.05))
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        code = cli.main(["verify-ns", "--config", str(cfg), "--out", str(out)])
        outs.append((code, out.read_bytes()))
    deterministic = outs[0] == outs[1]
    report = json.loads(outs[0][1])
    complete = report["certifiedT"] is not None or (
        report["failingBreakdown"] is not None
        and {"dominantTerm", "minimalAReduction", "Acomponents", "residualTermIntegrals"}
        <= set(report["failingBreakdown"]))
    if not BASELINE.exists():
        BASELINE.write_text(json.dumps(report, indent=2) + "\n")
    frozen = _close(report, json.loads(BASELINE.read_text()), TOL["baseline_rel"])
    fb = report["failingBreakdown"] or {}
    record("criterion 9a baseline run", outs[0][0] in (0, 2) and deterministic and complete and frozen,
           f"exit {outs[0][0]}, deterministic {deterministic}, breakdown complete {complete}, "
           f"matches frozen baseline {frozen}; certifiedT {report['certifiedT']}, "
           f"dominant {fb.get('dominantTerm')}, A reduction needed {fb.get('minimalAReduction', 0):.3e}")


@pytest.mark.slow
def test_criterion_9b_refinement_trend():
    A = []
    for n, tau in ((2, 0.1), (4, 0.05), (8, 0.025)):
        if n == 4:
            _baseline_traj()
            result = _BASE["result"]
        else:
            result = cli.solve_and_estimate(cli.parse_config(BASELINE_CONFIG.format(n=n, tau=tau)))
        rep = certify(result.ledger, default_table())
        A.append(rep.rows[-1].A)
    ok = A[0] > A[1] > A[2]
    record("criterion 9b refinement trend", ok, "A at T=0.2: " + ", ".join(f"{a:.4e}" for a in A))


# ---------------------------------------------------------------- 10


def test_criterion_10_error_bound_wiring():
    rng = np.random.default_rng(10)
    mpmath.mp.dps = 50
    worst = 0.0
    for _ in range(200):
        A, M = 10 ** rng.uniform(-15, -3), math.exp(rng.uniform(0, 30))
        h0, h1, nu = 10 ** rng.uniform(-8, 0), 10 ** rng.uniform(-8, 0), 10 ** rng.uniform(-2, 1)
        m = mpmath.mpf
        exact = (16 * m(A) * m(M) + m(h0) ** 2 + 2 * m(nu) * m(h1) ** 2
                 + m(4) / 3 * m(24) ** m(1.5) * m(h0) ** m(1.5) * m(h1) ** m(1.5))
        got = error_bound_formula(A, M, h0, h1, nu, 24.0)
        worst = max(worst, float(abs((m(got) - exact) / exact)))
    record("criterion 10 error bound wiring", worst <= TOL["error_bound_rel"], f"max relative deviation {worst:.2e}")
