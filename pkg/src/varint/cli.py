"""Batch command-line front end.

Scenario configurations come in as JSON, trajectories go out as CSV (17
significant digits, '.' decimal, newline-terminated rows), and run summaries
as JSON.  Identical configuration and seed produce byte-identical CSV.
Subcommands: ``simulate`` (initial-value runs), ``bvp`` (two-point solves),
``ocp`` (optimal control), ``order`` (step-size sweeps), and ``check``
(invariant suites).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checks
from .control import (JointLimitPenalty, OCProblem, TwoLinkParams,
                      control_effort_cost, free_particle_model, solve_ocp,
                      solution_table, two_link_forces, two_link_model)
from .discretization import make_scheme
from .errors import ConfigError, VarintError
from .flow import initial_pair, phi_values, run as run_flow, solve_boundary_path
from .jets import JetPoint, uniform_grid
from .lagrangian import named_lagrangian
from .order import cubic_trajectory, estimate_order

KINDS = ("spline", "custom-lagrangian", "ocp-twolink", "ocp-custom")
SCHEMES = ("taylor", "taylor-midpoint", "midpoint-difference",
           "trapezoid-velocity", "spline-exact")


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _check_keys(obj: dict, allowed, where: str):
    unknown = sorted(set(obj) - set(allowed))
    _require(not unknown, f"unknown fields in {where}: {unknown}")


def _vector(obj, name, n=None):
    try:
        v = np.asarray(obj, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a numeric vector")
    _require(n is None or v.size == n, f"{name} must have length {n}")
    return v


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Validated scenario description; unknown fields are rejected."""

    kind: str
    name: str
    scheme: str
    raw: dict = field(repr=False)

    @staticmethod
    def parse(obj: dict) -> "ScenarioConfig":
        _require(isinstance(obj, dict), "scenario must be a JSON object")
        top_allowed = {"kind", "name", "scheme", "grid", "boundary", "initial",
                       "lagrangian", "n", "model", "params", "penalty",
                       "tolerances", "h_values", "trajectory", "seed"}
        _check_keys(obj, top_allowed, "scenario")
        kind = obj.get("kind")
        _require(kind in KINDS, f"kind must be one of {KINDS}, got {kind!r}")
        name = obj.get("name")
        _require(isinstance(name, str) and name, "name must be a non-empty string")
        _require(all(c.isalnum() or c in "-_" for c in name),
                 "name may contain only alphanumerics, '-' and '_'")
        scheme = obj.get("scheme", "taylor")
        _require(scheme in SCHEMES, f"scheme must be one of {SCHEMES}")
        if "grid" in obj:
            g = obj["grid"]
            _require(isinstance(g, dict), "grid must be an object")
            _check_keys(g, {"t0", "T", "N"}, "grid")
            _require(isinstance(g.get("N"), int) and g["N"] >= 1,
                     "grid.N must be a positive integer")
            _require(float(g.get("T", 0)) > float(g.get("t0", 0.0)),
                     "grid.T must exceed grid.t0")
        if "tolerances" in obj:
            _check_keys(obj["tolerances"], {"newton", "path"}, "tolerances")
        return ScenarioConfig(kind, name, scheme, obj)


def _grid_of(cfg: ScenarioConfig):
    g = cfg.raw.get("grid")
    _require(g is not None, "scenario requires a grid")
    return uniform_grid(float(g.get("t0", 0.0)), float(g["T"]), int(g["N"]))


def _lagrangian_of(cfg: ScenarioConfig):
    if cfg.kind == "spline":
        n = int(cfg.raw.get("n", 1))
        return named_lagrangian("spline", n)
    entry = cfg.raw.get("lagrangian")
    _require(isinstance(entry, dict), "custom-lagrangian requires a 'lagrangian' object")
    _check_keys(entry, {"name", "n"}, "lagrangian")
    try:
        return named_lagrangian(entry["name"], int(entry.get("n", 1)))
    except KeyError as exc:
        raise ConfigError(str(exc))


def _path_outputs(cfg, path, extra_cols=None):
    n = path.n
    header = ["t"] + [f"q{i}" for i in range(n)] + [f"v{i}" for i in range(n)]
    cols = [path.grid.times, path.positions(), path.velocities()]
    rows = np.column_stack(cols)
    return header, rows


def _summary(cfg, path, cost=None, timings=None):
    phi = phi_values(path)
    out = {
        "name": cfg.name,
        "kind": cfg.kind,
        "scheme": cfg.scheme,
        "grid": {"t0": path.grid.t0, "h": path.grid.h, "N": path.grid.N},
        "residuals": {
            "del_max": float(np.max(path.diagnostics["del_residual"]))
            if len(path.diagnostics.get("del_residual", [])) else 0.0,
        },
        "invariants": {
            "phi_drift": float(np.max(np.abs(phi - phi[0]))) if len(phi) else 0.0,
        },
        "timings": timings or {},
    }
    if cost is not None:
        out["cost"] = float(cost)
    return out


def run_scenario(cfg: ScenarioConfig, command: str, outdir: Path, seed: int) -> dict:
    """Execute one validated scenario and write its output files.

    Outputs are held in memory and written only after the solve succeeds, so
    failures leave no partial files.
    """
    t_start = time.perf_counter()
    if command == "order":
        return _run_order(cfg, outdir)

    if command in ("simulate", "bvp"):
        _require(cfg.kind in ("spline", "custom-lagrangian"),
                 f"{command} expects a spline or custom-lagrangian scenario")
        L = _lagrangian_of(cfg)
        Ld = make_scheme(cfg.scheme, L)
        grid = _grid_of(cfg)
        tol = float(cfg.raw.get("tolerances", {}).get("path", 1e-10))
        if command == "simulate":
            init = cfg.raw.get("initial")
            _require(isinstance(init, dict), "simulate requires 'initial'")
            _check_keys(init, {"q0", "v0", "q1", "v1", "ddq0", "d3q0"}, "initial")
            q0 = _vector(init["q0"], "initial.q0", L.n)
            v0 = _vector(init["v0"], "initial.v0", L.n)
            if "q1" in init:
                _require("v1" in init, "initial.v1 required with initial.q1")
                x0 = JetPoint(q0, (v0,))
                x1 = JetPoint(_vector(init["q1"], "initial.q1", L.n),
                              (_vector(init["v1"], "initial.v1", L.n),))
            else:
                _require("ddq0" in init and "d3q0" in init,
                         "initial needs (q1, v1) or (ddq0, d3q0)")
                jet = JetPoint(q0, (v0, _vector(init["ddq0"], "initial.ddq0", L.n),
                                    _vector(init["d3q0"], "initial.d3q0", L.n)))
                x0, x1 = initial_pair(L, jet, grid.h)
            path = run_flow(Ld, x0, x1, grid)
        else:
            b = cfg.raw.get("boundary")
            _require(isinstance(b, dict), "bvp requires 'boundary'")
            _check_keys(b, {"q0", "v0", "qN", "vN"}, "boundary")
            x0 = JetPoint(_vector(b["q0"], "boundary.q0", L.n),
                          (_vector(b["v0"], "boundary.v0", L.n),))
            xN = JetPoint(_vector(b["qN"], "boundary.qN", L.n),
                          (_vector(b["vN"], "boundary.vN", L.n),))
            path = solve_boundary_path(Ld, x0, xN, grid, tol=tol)
        header, rows = _path_outputs(cfg, path)
        summary = _summary(cfg, path,
                           timings={"solve_s": time.perf_counter() - t_start})
    elif command == "ocp":
        _require(cfg.kind in ("ocp-twolink", "ocp-custom"),
                 "ocp expects an ocp-twolink or ocp-custom scenario")
        problem, forces, labels = _ocp_problem_of(cfg)
        result = solve_ocp(problem, scheme=cfg.scheme)
        header, rows = solution_table(problem, result, forces=forces)
        if labels:
            header = labels
        path = result.path
        summary = _summary(cfg, path, cost=result.cost,
                           timings={"solve_s": time.perf_counter() - t_start})
    else:
        raise ConfigError(f"unknown command {command!r}")

    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{cfg.name}_trajectory.csv"
    write_csv(csv_path, header, rows)
    summary["outputs"] = [str(csv_path)]
    json_path = outdir / f"{cfg.name}_summary.json"
    json_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    summary["outputs"].append(str(json_path))
    return summary


def _ocp_problem_of(cfg: ScenarioConfig):
    b = cfg.raw.get("boundary")
    _require(isinstance(b, dict), "ocp requires 'boundary'")
    _check_keys(b, {"q0", "v0", "qN", "vN"}, "boundary")
    g = cfg.raw.get("grid")
    _require(isinstance(g, dict), "ocp requires 'grid'")
    T, N = float(g["T"]), int(g["N"])
    if cfg.kind == "ocp-twolink":
        pr = cfg.raw.get("params", {})
        _check_keys(pr, {"m1", "m2", "l1", "l2", "J1", "J2", "g"}, "params")
        params = TwoLinkParams(**{k: float(v) for k, v in pr.items()})
        model = two_link_model(params)
        penalty = None
        pcfg = cfg.raw.get("penalty")
        if pcfg:
            _check_keys(pcfg, {"slope", "lo_deg", "hi_deg", "width"}, "penalty")
            penalty = JointLimitPenalty(
                n=2, slope=float(pcfg.get("slope", 1000.0)),
                lo=math.radians(float(pcfg.get("lo_deg", 0.0))),
                hi=math.radians(float(pcfg.get("hi_deg", 170.0))),
                width=float(pcfg.get("width", 1e-6)))
        forces = lambda jet: two_link_forces(params, jet)
        labels = ["t", "theta1", "theta2", "dtheta1", "dtheta2", "u1", "u2"]
        n = 2
    else:
        entry = cfg.raw.get("model", {"name": "free-particle", "n": 1})
        _check_keys(entry, {"name", "n"}, "model")
        _require(entry.get("name") == "free-particle",
                 "ocp-custom supports the built-in 'free-particle' model")
        n = int(entry.get("n", 1))
        model = free_particle_model(n)
        penalty, forces, labels = None, None, None
    problem = OCProblem(model, control_effort_cost(),
                        qa=_vector(b["q0"], "boundary.q0", n),
                        va=_vector(b["v0"], "boundary.v0", n),
                        qb=_vector(b["qN"], "boundary.qN", n),
                        vb=_vector(b["vN"], "boundary.vN", n),
                        T=T, N=N, penalty=penalty)
    return problem, forces, labels


def _run_order(cfg: ScenarioConfig, outdir: Path) -> dict:
    _require(cfg.kind in ("spline", "custom-lagrangian"),
             "order expects a spline or custom-lagrangian scenario")
    L = _lagrangian_of(cfg)
    Ld = make_scheme(cfg.scheme, L)
    hs = cfg.raw.get("h_values")
    _require(isinstance(hs, list) and len(hs) >= 4,
             "order requires 'h_values' with at least 4 entries")
    tr = cfg.raw.get("trajectory")
    _require(isinstance(tr, dict), "order requires 'trajectory'")
    _check_keys(tr, {"kind", "coeffs"}, "trajectory")
    _require(tr.get("kind") == "cubic", "trajectory.kind must be 'cubic'")
    coeffs = np.asarray(tr["coeffs"], dtype=float)
    boundary = cubic_trajectory(coeffs.T if coeffs.shape[0] != 4 else coeffs)
    t0 = time.perf_counter()
    report = estimate_order(Ld, L, boundary, [float(h) for h in hs],
                            scheme_name=cfg.scheme)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{cfg.name}_order.csv"
    csv_path.write_text(report.to_csv())
    doc = report.to_dict()
    doc.update({"name": cfg.name,
                "timings": {"solve_s": time.perf_counter() - t0}})
    json_path = outdir / f"{cfg.name}_order.json"
    json_path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return doc


def load_scenarios(config_path: str):
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if isinstance(obj, dict) and "scenarios" in obj:
        _check_keys(obj, {"scenarios"}, "batch config")
        _require(isinstance(obj["scenarios"], list) and obj["scenarios"],
                 "scenarios must be a non-empty list")
        return [ScenarioConfig.parse(s) for s in obj["scenarios"]]
    return [ScenarioConfig.parse(obj)]


def _error_json(exc) -> str:
    kind = "config" if isinstance(exc, ConfigError) else "solver"
    return json.dumps({"error": {"type": kind, "message": str(exc)}},
                      sort_keys=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="varint",
        description="variational integrators for second-order systems")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, desc in [("simulate", "initial-value run of a discrete scheme"),
                      ("bvp", "two-point boundary solve over a path"),
                      ("ocp", "boundary-value optimal control solve"),
                      ("order", "step-size error sweep for a scheme")]:
        p = sub.add_parser(cmd, help=desc)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="concurrent scenarios for batch configs")
        p.add_argument("--seed", type=int, default=0)
    pc = sub.add_parser("check", help="run invariant suites")
    pc.add_argument("suites", nargs="*", default=[],
                    help=f"suites to run (default all): {sorted(checks.SUITES)}")
    pc.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)

    if args.command == "check":
        return checks.run_suites(args.suites or None, seed=args.seed)

    try:
        scenarios = load_scenarios(args.config)
    except ConfigError as exc:
        print(_error_json(exc))
        return 2

    outdir = Path(args.out)
    status = 0
    try:
        if args.workers > 1 and len(scenarios) > 1:
            with concurrent.futures.ThreadPoolExecutor(args.workers) as pool:
                futs = [pool.submit(run_scenario, c, args.command, outdir, args.seed)
                        for c in scenarios]
                results = [f.result() for f in futs]
        else:
            results = [run_scenario(c, args.command, outdir, args.seed)
                       for c in scenarios]
    except ConfigError as exc:
        print(_error_json(exc))
        return 2
    except VarintError as exc:
        print(_error_json(exc))
        return 1
    for res in results:
        print(json.dumps({"name": res.get("name"), "status": "ok"}, sort_keys=True))
    return status


if __name__ == "__main__":
    sys.exit(main())
