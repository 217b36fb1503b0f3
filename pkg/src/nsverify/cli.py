"""Command line front end: solve, estimate, certify.

Exit codes: 0 when some horizon ``T' > 0`` is certified, 2 when the
pipeline ran but nothing was certified, 1 on any failure (bad config,
Newton failure, I/O).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import fields, mesh as mesh_mod, ode_verify
from .constants import default_table
from .fem import TaylorHood
from .ns_scheme import NewtonOptions, StepFailed, run as run_scheme
from .residual_bound import FORCING_MODES
from .verifier import build_estimate_ledger, certify

log = logging.getLogger("nsverify")

EXIT_CERTIFIED, EXIT_FAILURE, EXIT_NOT_CERTIFIED = 0, 1, 2

INITIAL_IDS = ("taylor_green", "zero", "custom-coefficients")
FORCING_IDS = ("zero", "taylor_green", "modulated_taylor_green", "manufactured_taylor_green")
LINEAR_SOLVERS = ("direct", "iterative")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

def _plain(node, path: tuple, marks: dict):
    """Convert a composed YAML node to Python, recording the line of every key path."""
    marks[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise ConfigError(f"line {k.start_mark.line + 1}: duplicate key {key!r}")
            marks[path + (key,)] = k.start_mark.line + 1
            out[key] = _plain(v, path + (key,), marks)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, path + (i,), marks) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


@dataclass
class RunConfig:
    mesh_n: int
    tau: float
    T_final: float
    nu: float
    initial_data: dict
    forcing: dict
    constants: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return int(round(self.T_final / self.tau))

    def canonical(self) -> dict:
        return {"mesh_n": self.mesh_n, "tau": self.tau, "T_final": self.T_final, "nu": self.nu,
                "initial_data": self.initial_data, "forcing": self.forcing, "constants": self.constants,
                "solver": self.solver}

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


class _Validator:
    def __init__(self, source: str, marks: dict):
        self.source = source
        self.marks = marks

    def fail(self, path: tuple, msg: str):
        p = path
        while p not in self.marks and p:
            p = p[:-1]
        line = self.marks.get(p, 1)
        name = ".".join(str(x) for x in path) or "<root>"
        raise ConfigError(f"{self.source}:{line}: {name}: {msg}")

    def number(self, d: dict, path: tuple, key: str, *, required=True, default=None, integer=False,
               positive=False, minimum=None):
        if key not in d:
            if required:
                self.fail(path, f"missing required key {key!r}")
            return default
        v = d[key]
        p = path + (key,)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(p, f"expected a number, got {v!r}")
        if integer and int(v) != v:
            self.fail(p, f"expected an integer, got {v!r}")
        if not math.isfinite(v):
            self.fail(p, "must be finite")
        if positive and not v > 0:
            self.fail(p, f"must be positive, got {v!r}")
        if minimum is not None and v < minimum:
            self.fail(p, f"must be >= {minimum}, got {v!r}")
        return int(v) if integer else float(v)

    def choice(self, d: dict, path: tuple, key: str, options, default=None):
        if key not in d:
            if default is None:
                self.fail(path, f"missing required key {key!r} (one of {', '.join(options)})")
            return default
        if d[key] not in options:
            self.fail(path + (key,), f"expected one of {', '.join(options)}, got {d[key]!r}")
        return d[key]

    def mapping(self, d: dict, path: tuple, key: str, required=True) -> dict:
        if key not in d:
            if required:
                self.fail(path, f"missing required section {key!r}")
            return {}
        if not isinstance(d[key], dict):
            self.fail(path + (key,), "expected a mapping")
        return d[key]

    def known(self, d: dict, path: tuple, keys) -> None:
        for k in d:
            if k not in keys:
                self.fail(path + (k,), f"unknown key (expected one of {', '.join(keys)})")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse a YAML (or JSON) run configuration with line-precise validation errors."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ConfigError(f"{source}:{line}: syntax error: {getattr(exc, 'problem', exc)}") from None
    if node is None or not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{source}:1: <root>: expected a mapping of settings")
    marks: dict = {}
    try:
        data = _plain(node, (), marks)
    except ConfigError as exc:
        raise ConfigError(f"{source}:{str(exc)[5:]}") from None
    v = _Validator(source, marks)
    v.known(data, (), ("mesh_n", "tau", "T_final", "nu", "initial_data", "forcing", "constants",
                       "solver", "output"))

    mesh_n = v.number(data, (), "mesh_n", integer=True, minimum=2)
    tau = v.number(data, (), "tau", positive=True)
    T_final = v.number(data, (), "T_final", positive=True)
    if T_final < tau:
        v.fail(("T_final",), f"must be >= tau ({tau})")
    steps = T_final / tau
    if abs(steps - round(steps)) > 1e-12 * max(1.0, steps):
        v.fail(("T_final",), f"T_final/tau = {steps!r} is not an integer (horizon must be a grid node)")
    nu = v.number(data, (), "nu", positive=True)

    init = v.mapping(data, (), "initial_data")
    ip = ("initial_data",)
    v.known(init, ip, ("id", "amplitude", "modes"))
    init_id = v.choice(init, ip, "id", INITIAL_IDS)
    initial = {"id": init_id, "amplitude": v.number(init, ip, "amplitude", required=False, default=1.0)}
    if init_id == "custom-coefficients":
        modes = init.get("modes")
        if not isinstance(modes, list) or not modes:
            v.fail(ip + ("modes",), "custom-coefficients needs a nonempty list of modes {k, amplitude, phase}")
        for j, m in enumerate(modes):
            mp = ip + ("modes", j)
            if not isinstance(m, dict):
                v.fail(mp, "expected a mapping with k, amplitude and optional phase")
            v.known(m, mp, ("k", "amplitude", "phase"))
            for key in ("k", "amplitude"):
                vec = m.get(key)
                if not (isinstance(vec, list) and len(vec) == 3
                        and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vec)):
                    v.fail(mp + (key,), "expected a list of three numbers")
            v.number(m, mp, "phase", required=False, default=0.0)
        try:
            fields.TrigField(modes)
        except ValueError as exc:
            v.fail(ip + ("modes",), str(exc))
        initial["modes"] = modes

    forc = v.mapping(data, (), "forcing", required=False) or {"mode": "zero", "id": "zero"}
    fp = ("forcing",)
    v.known(forc, fp, ("mode", "id", "amplitude", "samples"))
    mode = v.choice(forc, fp, "mode", FORCING_MODES)
    fid = v.choice(forc, fp, "id", FORCING_IDS, default="zero")
    forcing = {"mode": mode, "id": fid,
               "amplitude": v.number(forc, fp, "amplitude", required=False, default=1.0),
               "samples": v.number(forc, fp, "samples", required=False, default=33, integer=True, minimum=2)}
    if (mode == "zero") != (fid == "zero"):
        v.fail(fp + ("mode",), f"mode {mode!r} does not match forcing id {fid!r}")
    if mode == "affine" and not make_forcing(forcing, nu).affine_in_time:
        v.fail(fp + ("mode",), f"forcing {fid!r} is not affine in time; declare mode analytic-sampled")

    consts = v.mapping(data, (), "constants", required=False)
    names = tuple(default_table().__dataclass_fields__)
    for k in consts:
        if k not in names:
            v.fail(("constants", k), f"unknown constant (expected one of {', '.join(names)})")
        v.number(consts, ("constants",), k, positive=True)

    solver = v.mapping(data, (), "solver", required=False)
    sp_ = ("solver",)
    v.known(solver, sp_, ("newton_tol", "newton_max_iter", "linear_solver"))
    solver_cfg = {"newton_tol": v.number(solver, sp_, "newton_tol", required=False, default=1e-10, positive=True),
                  "newton_max_iter": v.number(solver, sp_, "newton_max_iter", required=False, default=25,
                                              integer=True, minimum=1),
                  "linear_solver": v.choice(solver, sp_, "linear_solver", LINEAR_SOLVERS, default="direct")}

    out = v.mapping(data, (), "output", required=False)
    v.known(out, ("output",), ("report", "csv_dir", "checkpoint"))
    for k, val in out.items():
        if not isinstance(val, str):
            v.fail(("output", k), "expected a path string")

    return RunConfig(mesh_n, tau, T_final, nu, initial, forcing, {k: float(x) for k, x in consts.items()},
                     solver_cfg, dict(out))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))


# ------------------------------------------------------------- factories

def make_initial(cfg: dict):
    if cfg["id"] == "zero":
        return fields.Zero()
    if cfg["id"] == "taylor_green":
        return fields.TaylorGreen(cfg["amplitude"])
    field_ = fields.TrigField(cfg["modes"])
    field_.a = field_.a * cfg["amplitude"]
    return field_


def make_forcing(cfg: dict, nu: float):
    fid, amp = cfg["id"], cfg["amplitude"]
    if fid == "zero":
        return fields.ZeroForcing()
    if fid == "taylor_green":
        return fields.SteadyForcing(fields.TaylorGreen(amp))
    if fid == "modulated_taylor_green":
        return fields.ModulatedForcing(np.sin, fields.TaylorGreen(amp))
    # exact solution amp * exp(-t) * TG
    return fields.ManufacturedTaylorGreen(nu, lambda t: amp * math.exp(-t), lambda t: -amp * math.exp(-t))


# -------------------------------------------------------------- pipeline

@dataclass
class PipelineResult:
    traj: object
    ledger: object
    report: object = None


def solve_and_estimate(config: RunConfig) -> PipelineResult:
    constants = default_table().with_overrides(**config.constants)
    space = TaylorHood(mesh_mod.build(config.mesh_n))
    u0 = make_initial(config.initial_data)
    forcing = make_forcing(config.forcing, config.nu)
    opts = NewtonOptions(tol=config.solver["newton_tol"], max_iter=config.solver["newton_max_iter"],
                         linear_solver=config.solver["linear_solver"])
    log.info("solving: n=%d tau=%g steps=%d nu=%g", config.mesh_n, config.tau, config.n_steps, config.nu)
    traj = run_scheme(space, u0, forcing, config.tau, config.n_steps, config.nu, opts,
                      callback=lambda i, tr: log.info("step %d/%d done", i, config.n_steps))
    ckpt = config.output.get("checkpoint")
    if ckpt:
        traj.save(ckpt)
    log.info("estimating")
    ledger = build_estimate_ledger(traj, u0, config.forcing["mode"], constants, config.forcing["samples"])
    return PipelineResult(traj, ledger)


def _write_csvs(result: PipelineResult, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    ledger = result.ledger
    ledger.residual.to_csv(directory / "residual_ledger.csv")
    with open(directory / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "t", "H0", "H1", "u_L6", "u_W12", "uhat_L6", "uhat_H1"])
        for i, nd in enumerate(ledger.nodes):
            w.writerow([i, repr(float(ledger.times[i])), repr(nd.H0), repr(nd.H1), repr(nd.u_L6), repr(nd.u_W12),
                        repr(ledger.uhat_L6(i)), repr(ledger.uhat_H1(i))])
    if result.report is not None:
        with open(directory / "horizons.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "A", "alphaInt", "M", "B1", "B2", "lhs", "satisfied"])
            for r in result.report.rows:
                w.writerow([repr(r.t), repr(r.A), repr(r.alphaInt), repr(r.M), repr(r.B1), repr(r.B2),
                            repr(r.lhs), r.satisfied])


def ledger_summary(ledger) -> dict:
    return {
        "tau": ledger.tau, "nu": ledger.nu,
        "e0L2": ledger.e0_L2, "e0L3": ledger.e0_L3,
        "nodes": [{"t": float(ledger.times[i]), "H0": nd.H0, "H1": nd.H1, "uL6": nd.u_L6, "uW12": nd.u_W12,
                   "uhatL6": ledger.uhat_L6(i), "uhatH1": ledger.uhat_H1(i)} for i, nd in enumerate(ledger.nodes)],
        "slabs": [{"slab": r.slab, "terms": list(r.terms), "totalW13": r.total_w13, "totalW12": r.total_w12,
                   "flags": list(r.flags)} for r in ledger.residual.rows],
        "flags": ledger.flags,
    }


def run(config: RunConfig, out: str | None = None, csv_dir: str | None = None) -> int:
    out = out or config.output.get("report")
    csv_dir = csv_dir or config.output.get("csv_dir")
    result = solve_and_estimate(config)
    constants = default_table().with_overrides(**config.constants)
    mesh_info = {"n": config.mesh_n, "h": result.traj.space.mesh.h}
    result.report = certify(result.ledger, constants, mesh_info, config.hash())
    text = result.report.to_json()
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)
    if csv_dir:
        _write_csvs(result, Path(csv_dir))
    if result.report.certified:
        log.info("certified up to T' = %g", result.report.certifiedT)
        return EXIT_CERTIFIED
    log.info("criterion not satisfied on any grid horizon")
    return EXIT_NOT_CERTIFIED


# ---------------------------------------------------------------- commands

def _cmd_verify_ns(args) -> int:
    return run(load_config(args.config), args.out, args.csv)


def _cmd_estimate_only(args) -> int:
    config = load_config(args.config)
    result = solve_and_estimate(config)
    summary = ledger_summary(result.ledger)
    summary["configHash"] = config.hash()
    text = json.dumps(summary, indent=2)
    out = args.out or config.output.get("report")
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)
    if args.csv or config.output.get("csv_dir"):
        _write_csvs(result, Path(args.csv or config.output["csv_dir"]))
    return EXIT_CERTIFIED


def _cmd_verify_ode(args) -> int:
    if not args.tau > 0:
        raise ConfigError("need tau > 0")
    if args.steps is not None:
        if args.steps < 1:
            raise ConfigError("need steps >= 1")
        steps, T = args.steps, args.steps * args.tau
    else:
        if not args.T >= args.tau:
            raise ConfigError("need T >= tau")
        ratio = args.T / args.tau
        if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
            raise ConfigError(f"T/tau = {ratio!r} must be an integer")
        steps, T = int(round(ratio)), args.T
    traj, failure = ode_verify.euler_solve_until_failure(args.y0, args.tau, steps)
    certs = ode_verify.prefix_certificates(traj)
    horizon = ode_verify.certified_horizon(traj)
    payload = {
        "y0": args.y0, "tau": args.tau, "T": T, "steps": steps,
        "reachedT": traj.T,
        "failure": None if failure is None else {"step": failure.step, "message": str(failure)},
        "certificate": certs[-1].to_dict() if certs else None,
        "prefixes": [c.to_dict() for c in certs],
        "certifiedT": horizon if horizon > 0 else None,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_CERTIFIED if horizon > 0 else EXIT_NOT_CERTIFIED


def _cmd_dump_mesh(args) -> int:
    text = mesh_mod.build(args.n).to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_CERTIFIED


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_FAILURE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nsverify", description="A posteriori existence verification for periodic Navier-Stokes")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("verify-ns", help="solve, estimate and certify")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="report JSON path (default: stdout)")
    s.add_argument("--csv", help="directory for CSV exports")
    s.set_defaults(func=_cmd_verify_ns)

    s = sub.add_parser("estimate-only", help="solve and build the estimate ledgers, skip certification")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--csv")
    s.set_defaults(func=_cmd_estimate_only)

    s = sub.add_parser("verify-ode", help="certificate for the model ODE y' = y^2")
    s.add_argument("--y0", type=float, required=True)
    s.add_argument("--tau", type=float, required=True)
    horizon = s.add_mutually_exclusive_group(required=True)
    horizon.add_argument("--steps", type=int, help="number of Euler steps")
    horizon.add_argument("--T", type=float, help="final time (a multiple of tau)")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_verify_ode)

    s = sub.add_parser("dump-mesh", help="write the periodic mesh as JSON")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_dump_mesh)
    return p


def _verbosity() -> int:
    raw = os.environ.get("NSVERIFY_VERBOSITY", "0").strip().lower()
    named = {"quiet": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    if raw in named:
        return named[raw]
    try:
        level = int(raw)
    except ValueError:
        return logging.WARNING
    return {0: logging.WARNING, 1: logging.INFO}.get(level, logging.DEBUG if level > 1 else logging.ERROR)


def _thread_limit():
    raw = os.environ.get("NSVERIFY_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"NSVERIFY_THREADS must be a positive integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    logging.basicConfig(level=_verbosity(), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_FAILURE
    try:
        with _thread_limit():
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except StepFailed as exc:
        print(f"step failed: step {exc.step}: {exc}", file=sys.stderr)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
