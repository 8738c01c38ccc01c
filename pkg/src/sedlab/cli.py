"""Command-line entry point ``sedlab``.

Exit status: 0 on success, 1 when a check or experiment fails, 2 on usage
errors (bad arguments or an invalid configuration file).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .errors import SedlabError
from .config import ExperimentConfig, UsageError, parse_config, report_header, validate


def _config(args, **extra) -> ExperimentConfig:
    if args.config:
        cfg = parse_config(Path(args.config).read_text())
    else:
        cfg = ExperimentConfig()
    updates = {k: v for k, v in extra.items() if v is not None}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out"] = args.out
    cfg = dataclasses.replace(cfg, **updates)
    validate(cfg)
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print(data) -> None:
    print(json.dumps(io._jsonable(data), indent=2, sort_keys=True))


def cmd_simulate(args) -> int:
    from .dynamics import simulate, theorem1_certificate
    from .experiments import _lambda, make_cloud

    cfg = _config(args)
    cloud = make_cloud(cfg, cfg.N_list[0], cfg.seed)
    T = cfg.T if cfg.T > 0 else 1.0
    dt = cfg.dt if cfg.dt > 0 else T / cfg.steps
    opts = {"p_max": cfg.p_max} if cfg.solver == "reflections" else None
    traj = simulate(cloud, cfg.gravity, T, dt, cfg.solver, cfg.scheme, cfg.stride, _lambda(cfg, cloud),
                    cfg.exact_M, opts)
    out = _out_dir(cfg)
    io.write_trajectory(out / "trajectory.csv", traj)
    cert = theorem1_certificate(traj)
    summary = {**report_header(cfg), "status": traj.status, "error": traj.error,
               "certificate": dataclasses.asdict(cert)}
    io.write_json(out / "simulate.json", summary)
    _print({k: summary[k] for k in ("status", "error")})
    return 0 if traj.status == "ok" else 1


def cmd_meanfield(args) -> int:
    from .meanfield import Rho0Spec, evolve, init_blobs

    cfg = _config(args)
    spec = Rho0Spec(cfg.rho0_family, (0.0, 0.0, 0.0), cfg.rho0_scale)
    dens = init_blobs(spec, cfg.m_per_axis)
    dens = dataclasses.replace(dens, delta=cfg.delta_factor * dens.grid_spacing)
    T = cfg.T if cfg.T > 0 else 1.0
    dt = cfg.dt if cfg.dt > 0 else T / cfg.steps
    snaps = evolve(dens, cfg.gravity, T, dt, cfg.r0, cfg.snapshots)
    out = _out_dir(cfg)
    io.write_density_snapshots(out / "density.csv", snaps)
    summary = {**report_header(cfg), "times": [t for t, _ in snaps],
               "mass": [d.mass for _, d in snaps], "centroid": [d.centroid for _, d in snaps]}
    io.write_json(out / "meanfield.json", summary)
    _print({"times": summary["times"], "centroid": summary["centroid"]})
    return 0


def cmd_compare(args) -> int:
    from .meanfield import Rho0Spec, stability_compare

    cfg = _config(args)
    a = Rho0Spec(cfg.rho0_family, (0.0, 0.0, 0.0), cfg.rho0_scale)
    b = Rho0Spec(cfg.rho0_family, tuple(args.shift), args.scale_b or cfg.rho0_scale)
    T = cfg.T if cfg.T > 0 else 1.0
    dt = cfg.dt if cfg.dt > 0 else T / cfg.steps
    res = stability_compare(a, b, cfg.gravity, T, dt, cfg.r0, args.m, cfg.snapshots)
    out = _out_dir(cfg)
    io.write_table(out / "compare.csv", ["t", "w1"], list(zip(res["times"], res["w1"])))
    io.write_json(out / "compare.json", {**report_header(cfg), **res})
    _print(res)
    return 0


def cmd_diagnose(args) -> int:
    from .cloud import admissibility, choose_lambda

    cloud = io.read_cloud(args.cloud, r0=args.r0)
    lam = args.lam if args.lam else choose_lambda(cloud)[0]
    rep = admissibility(cloud, lam, args.Mbar, args.E)
    _print({"N": cloud.N, "diagnostics": dataclasses.asdict(rep.diagnostics),
            "admissible": rep.admissible, "smallness_product": rep.smallness_product})
    return 0


def cmd_wasserstein(args) -> int:
    from .ot import w1_exact, winf_exact

    mu, nu = io.read_measure(args.a), io.read_measure(args.b)
    if args.p == "1":
        value, plan = w1_exact(mu, nu)
        if args.plan:
            io.write_plan(args.plan, plan)
    else:
        value, assignment = winf_exact(mu, nu)
        if args.plan:
            io.write_table(args.plan, ["i", "j"], list(enumerate(assignment.tolist())))
    _print({"p": args.p, "distance": value})
    return 0


def cmd_solve(args) -> int:
    from .reflections import solve_velocities

    cloud = io.read_cloud(args.cloud, r0=args.r0)
    kin = solve_velocities(cloud, np.asarray(args.gravity, dtype=float), args.method)
    rows = [(i, *kin.V[i]) for i in range(cloud.N)]
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        io.write_table(Path(args.out) / "velocities.csv", ["id", "vx", "vy", "vz"], rows)
    _print({"method": args.method, "V": kin.V})
    return 0


def cmd_kernels_selftest(args) -> int:
    from .selftest import kernels_selftest

    rep = kernels_selftest(seed=args.seed or 0)
    _print(rep)
    return 0 if rep["passed"] else 1


def cmd_selftest(args) -> int:
    from .selftest import selftest

    rep = selftest(seed=args.seed or 0)
    _print(rep)
    return 0 if rep["passed"] else 1


def cmd_experiment(args) -> int:
    from .experiments import run_experiment

    cfg = _config(args, experiment=args.id)
    rep = run_experiment(cfg)
    _print({k: v for k, v in rep.items() if k not in ("cases", "checks", "config")})
    return 0 if rep.get("passed") else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="sedlab", description="Sedimentation of many small spheres in Stokes flow.")
    p.add_argument("--version", action="version", version=f"sedlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="integrate a particle cloud").set_defaults(fn=cmd_simulate)
    sub.add_parser("meanfield", parents=[common], help="evolve the continuum blob density").set_defaults(fn=cmd_meanfield)

    c = sub.add_parser("compare", parents=[common], help="W1 between two evolving densities")
    c.add_argument("--shift", type=float, nargs=3, default=(0.1, 0.0, 0.0), help="centre of the second density")
    c.add_argument("--scale-b", type=float, help="scale of the second density")
    c.add_argument("--m", type=int, default=10, help="blobs per axis")
    c.set_defaults(fn=cmd_compare)

    d = sub.add_parser("diagnose", parents=[common], help="cloud regime diagnostics")
    d.add_argument("cloud")
    d.add_argument("--r0", type=float)
    d.add_argument("--lam", type=float)
    d.add_argument("--Mbar", type=float, default=64.0)
    d.add_argument("--E", type=float, default=8.0)
    d.set_defaults(fn=cmd_diagnose)

    w = sub.add_parser("wasserstein", parents=[common], help="exact W1 or W-infinity between two measure CSVs")
    w.add_argument("--p", choices=("1", "inf"), required=True)
    w.add_argument("a")
    w.add_argument("b")
    w.add_argument("--plan", help="write the optimal plan as CSV")
    w.set_defaults(fn=cmd_wasserstein)

    s = sub.add_parser("solve", parents=[common], help="velocities of a cloud")
    s.add_argument("cloud")
    s.add_argument("--method", choices=("first-order", "reflections", "dense"), default="reflections")
    s.add_argument("--r0", type=float)
    s.add_argument("--gravity", type=float, nargs=3, default=(0.0, 0.0, -1.0))
    s.set_defaults(fn=cmd_solve)

    sub.add_parser("kernels-selftest", parents=[common], help="kernel property suite").set_defaults(fn=cmd_kernels_selftest)
    sub.add_parser("selftest", parents=[common], help="all property suites").set_defaults(fn=cmd_selftest)

    e = sub.add_parser("experiment", parents=[common], help="run exp1..exp4")
    e.add_argument("id", choices=("exp1", "exp2", "exp3", "exp4", "selftest"))
    e.set_defaults(fn=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (SedlabError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
