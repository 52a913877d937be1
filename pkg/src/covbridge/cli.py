"""Command-line front end: ``covbridge {solve,simulate,verify}``.

Exit codes: 0 success, 2 configuration error, 3 not controllable, 4 solver
failure, 5 Monte Carlo check failed, 6 verification failed.
"""
import argparse
import dataclasses
import logging
import math
import os
import sys

import numpy as np

from . import bundle
from .config import example_config, load_config
from .dynbridge import solve_pipeline
from .errors import BridgeError, ConfigError, NotControllable
from .mc import SimConfig, simulate_paths, validate_batch
from .model import TimeGrid
from .staticbridge import oracle_minimize, static_residuals

EXIT_OK, EXIT_PARSE, EXIT_CTRL, EXIT_SOLVER, EXIT_STATS, EXIT_VERIFY = 0, 2, 3, 4, 5, 6

# (name, tolerance); rQ is skipped when Pi(t) is never invertible
VERIFY_CHECKS = [
    ("stat_x", 1e-7), ("stat_y", 1e-7), ("constraint", 1e-8), ("quadratic", 1e-9),
    ("mlag_sym", 1e-7),
    ("r0", 1e-5), ("rT", 1e-5), ("rLyap", 1e-5), ("rSigma", 1e-5), ("rFactor", 1e-5),
    ("rRiccati", 1e-5), ("rQ", 1e-5), ("terminal_cov", 1e-5), ("terminal_output", 1e-5),
    ("energy_relgap", 1e-3), ("oracle_gap", 1e-6),
]


class CliFailure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _load(args):
    try:
        if args.example:
            cfg = example_config(args.example)
        elif args.config:
            cfg = load_config(args.config)
        else:
            raise ConfigError("one of --config or --example is required")
    except BridgeError as exc:
        raise CliFailure(EXIT_PARSE, f"ConfigError: {exc}") from exc
    if args.steps is not None:
        if args.steps < 2:
            raise CliFailure(EXIT_PARSE, "ConfigError: --steps must be at least 2")
        cfg.steps = args.steps
    return cfg


def _solve(cfg):
    try:
        return solve_pipeline(cfg.spec, TimeGrid(cfg.spec.T, cfg.steps))
    except NotControllable as exc:
        raise CliFailure(EXIT_CTRL, str(exc)) from exc
    except BridgeError as exc:
        raise CliFailure(EXIT_SOLVER, f"{type(exc).__name__}: {exc}") from exc


def run_solve(args, cfg=None):
    cfg = cfg or _load(args)
    pipe = _solve(cfg)
    bundle.write_solution(args.out, pipe, cfg.steps)
    C = np.atleast_2d(pipe.sol.C)
    print(f"solved {cfg.spec.name}: Jdyn = {pipe.energy.Jdyn:.10g}, "
          f"Jstatic = {pipe.energy.Jstatic:.10g}, "
          f"CXC' = {np.array2string(C @ pipe.sol.X @ C.T, precision=10)}")
    print(f"wrote solution.json, gains.csv, covariance.csv to {args.out}")
    return EXIT_OK, pipe


def run_simulate(args):
    cfg = _load(args)
    _, pipe = run_solve(args, cfg)
    opts = dict(cfg.simulate)
    n_paths = args.paths if args.paths is not None else int(opts.get("paths", 10_000))
    seed = args.seed if args.seed is not None else int(opts.get("seed", 0))
    every = args.store_every if args.store_every is not None else int(opts.get("store_every", 10))
    dt = args.dt if args.dt is not None else opts.get("dt")
    try:
        sim = SimConfig(n_paths=n_paths, seed=seed, dt=dt, store_every=every)
        batch = simulate_paths(pipe.spec, pipe.sched, sim)
    except BridgeError as exc:
        raise CliFailure(EXIT_SOLVER, f"{type(exc).__name__}: {exc}") from exc
    bundle.write_csv(os.path.join(args.out, "trajectories.csv"),
                     *bundle.trajectory_rows(batch, args.csv_paths))
    summary = {
        "seed": seed, "n_paths": n_paths, "dt": batch.dt, "store_every": every,
        "backend": batch.backend,
    }
    if n_paths >= 2:
        report = validate_batch(batch, pipe)
        summary.update({
            "empirical_terminal_cov": np.atleast_2d(report["empirical_terminal_cov"]).tolist(),
            "empirical_terminal_mean": report["empirical_terminal_mean"].tolist(),
            "empirical_energy": report["empirical_energy"],
            "predicted_terminal_cov": pipe.cov.Sigma[-1].tolist(),
            "predicted_energy": pipe.energy.Jdyn,
            "checks": report["checks"],
            "pass": report["pass"],
        })
    else:
        summary.update({"pass": True, "note": "fewer than 2 paths; no statistics"})
    bundle.write_json(os.path.join(args.out, "summary.json"), summary)
    print(f"simulated {n_paths} paths (seed {seed}); wrote trajectories.csv, summary.json")
    if not summary["pass"]:
        failed = [k for k, c in summary["checks"].items() if not c["pass"]]
        raise CliFailure(EXIT_STATS, f"statistical check failed: {', '.join(failed)}")
    return EXIT_OK, summary


def verify_report(pipe, corrupt_mlag=False, oracle=True):
    """Evaluate every named check; returns a list of ``(name, value, tol, status)``."""
    res = dict(pipe.residuals)
    if corrupt_mlag:
        sol = pipe.sol
        bad = dataclasses.replace(sol, Mlag=np.atleast_2d(sol.Mlag) + 1e-3 * (1.0 + abs(sol.Mlag).max()))
        res.update(static_residuals(bad))
    if oracle:
        try:
            orc = oracle_minimize(pipe.spec, pipe.moments)
            res["oracle_gap"] = abs(orc.objective - pipe.sol.objective)
        except BridgeError:
            res["oracle_gap"] = math.inf
    rows = []
    for name, tol in VERIFY_CHECKS:
        if name not in res:
            continue
        v = res[name]
        if name == "rQ" and not math.isfinite(v):
            rows.append((name, v, tol, "n/a"))
            continue
        rows.append((name, v, tol, "pass" if v <= tol else "FAIL"))
    return rows


def run_verify(args):
    cfg = _load(args)
    pipe = _solve(cfg)
    rows = verify_report(pipe, corrupt_mlag=args.corrupt_mlag)
    print(f"{'check':<16} {'value':>12} {'tol':>9}  status")
    for name, v, tol, status in rows:
        print(f"{name:<16} {v:>12.3e} {tol:>9.1e}  {status}")
    failed = [r[0] for r in rows if r[3] == "FAIL"]
    if failed:
        raise CliFailure(EXIT_VERIFY, f"verification failed: {', '.join(failed)}")
    print("all checks passed")
    return EXIT_OK, rows


def build_parser():
    parser = argparse.ArgumentParser(prog="covbridge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [("solve", "compute gains and covariance schedule"),
                           ("simulate", "solve, then run Monte Carlo validation"),
                           ("verify", "run the invariant suite")]:
        p = sub.add_parser(name, help=helptext)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="TOML model file")
        src.add_argument("--example", choices=["ou"], help="built-in model")
        p.add_argument("--steps", type=int, default=None, help="grid steps (default 1000)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--paths", type=int, default=None)
        if name == "simulate":
            p.add_argument("--store-every", type=int, default=None,
                           help="keep every k-th grid node (default 10)")
            p.add_argument("--dt", type=float, default=None, help="simulation step")
            p.add_argument("--csv-paths", type=int, default=100,
                           help="paths written to trajectories.csv (0 = all)")
        if name == "verify":
            p.add_argument("--corrupt-mlag", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"solve": run_solve, "simulate": run_simulate, "verify": run_verify}[args.command]
    try:
        code, _ = handler(args)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return code


if __name__ == "__main__":
    sys.exit(main())
