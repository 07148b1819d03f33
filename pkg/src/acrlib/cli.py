"""Command-line entry point: ``acr generate|factor|solve|pcg|bench``.

Exit codes: 0 success, 2 usage error, 3 solver failure. Failures print a
one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

from .acr import acr_factor
from .core import export_system
from .discretize import KINDS
from .errors import AcrError
from .report import FORMATS, RunConfig, emit, load_system, run, sweep

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3
WORKERS_ENV = "ACR_WORKERS"


class UsageError(Exception):
    pass


def _fail(code, kind, message):
    print(json.dumps({"error": kind, "message": str(message), "exit_code": code}), file=sys.stderr)
    return code


def _common(p, solver=True):
    g = p.add_argument_group("problem")
    g.add_argument("--problem", choices=KINDS, default="poisson")
    g.add_argument("--n", type=int, default=8, help="grid points per direction")
    g.add_argument("--alpha", type=float, default=0.0, help="convection strength")
    g.add_argument("--a", type=float, default=1.0, help="vortex parameter")
    g.add_argument("--kappa", type=float, default=None, help="wavenumber (default n/2)")
    if not solver:
        return
    g.add_argument("--system", default=None, help="Matrix Market directory from 'generate'")
    g.add_argument("--rhs", choices=("problem", "random"), default="problem")
    g.add_argument("--seed", type=int, default=0)
    s = p.add_argument_group("solver")
    s.add_argument("--eps", type=float, default=1e-3, help="H-matrix truncation tolerance")
    s.add_argument("--eta", type=float, default=2.0, help="admissibility parameter")
    s.add_argument("--leaf", type=int, default=32, help="leaf size")
    s.add_argument("--admissibility", choices=("standard", "weak"), default="standard")
    s.add_argument("--workers", type=int, default=None, help=f"worker threads (env {WORKERS_ENV})")
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--maxit", type=int, default=500)
    o = p.add_argument_group("output")
    o.add_argument("--output", "-o", default=None, help="report file (default stdout)")
    o.add_argument("--format", choices=FORMATS, default=None, help="default from --output suffix, else json")
    o.add_argument("--measure-peak", action="store_true", help="trace peak allocation (slower)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acr", description="Accelerated cyclic reduction for 3D block tridiagonal systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a discretized problem as Matrix Market files")
    _common(p, solver=False)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("factor", help="factor only and report the factorization")
    _common(p)
    p.add_argument("--dense", action="store_true", help="dense cyclic reduction instead of H-matrices")

    p = sub.add_parser("solve", help="direct solve")
    _common(p)
    p.add_argument("--method", choices=("acr", "cr-dense", "refine"), default="acr")

    p = sub.add_parser("pcg", help="conjugate gradients preconditioned by a low-accuracy factorization")
    _common(p)

    p = sub.add_parser("bench", help="sweep one parameter and collect the reports")
    _common(p)
    p.add_argument("--method", choices=("acr", "cr-dense", "pcg", "refine"), default="acr")
    p.add_argument("--sweep", required=True, help="RunConfig field to vary, e.g. eps or n")
    p.add_argument("--values", required=True, help="comma-separated values")
    return parser


def _workers(args):
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    if env is None or env == "":
        return 1
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None


def _format(args):
    if args.format:
        return args.format
    if args.output and Path(args.output).suffix.lower() == ".csv":
        return "csv"
    return "json"


def config_from_args(args, mode) -> RunConfig:
    try:
        return RunConfig(
            problem=args.problem,
            n=args.n,
            alpha=args.alpha,
            a=args.a,
            kappa=args.kappa,
            system=args.system,
            mode=mode,
            eps=args.eps,
            eta=args.eta,
            leaf=args.leaf,
            admissibility=args.admissibility,
            workers=_workers(args),
            seed=args.seed,
            rhs=args.rhs,
            tol=args.tol,
            maxit=args.maxit,
            measure_peak=args.measure_peak,
            output=args.output,
            format=_format(args),
        )
    except ValueError as err:
        raise UsageError(str(err)) from None


_CASTS = {f.name: f.type for f in fields(RunConfig)}


def _sweep_values(axis, text):
    if axis not in _CASTS:
        raise UsageError(f"unknown sweep parameter {axis!r}")
    raw = [v.strip() for v in text.split(",") if v.strip()]
    if not raw:
        raise UsageError("--values is empty")
    kind = _CASTS[axis]
    cast = int if "int" in kind else float if "float" in kind else str
    try:
        return [cast(v) for v in raw]
    except ValueError as err:
        raise UsageError(f"bad value for {axis}: {err}") from None


def _write(text, output):
    if output is None:
        sys.stdout.write(text)
        return
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _generate(args):
    cfg = RunConfig(problem=args.problem, n=args.n, alpha=args.alpha, a=args.a, kappa=args.kappa)
    system, _ = cfg.problem_spec.build()
    export_system(system, args.out)
    print(json.dumps({"written": str(args.out), "n_planes": system.n_planes, "dim": system.dim}))
    return EXIT_OK


def _factor(args):
    cfg = config_from_args(args, "cr-dense" if args.dense else "acr")
    system, _ = load_system(cfg)
    t0 = time.perf_counter()
    fact = acr_factor(system, cfg.acr_config)
    out = fact.to_json()
    out["t_factor"] = time.perf_counter() - t0
    out["run"] = cfg.to_dict()
    _write(json.dumps(out, indent=2, sort_keys=True) + "\n", cfg.output)
    return EXIT_OK


def _single(args, mode):
    cfg = config_from_args(args, mode)
    report = run(cfg)
    _write(emit(report, cfg.format), cfg.output)
    if report.status != "ok":
        return _fail(EXIT_SOLVER, "solver", report.error)
    return EXIT_OK


def _bench(args):
    cfg = config_from_args(args, args.method)
    values = _sweep_values(args.sweep, args.values)
    try:
        replace(cfg, **{args.sweep: values[0]})
    except ValueError as err:
        raise UsageError(str(err)) from None
    reports = sweep(cfg, args.sweep, values)
    _write(emit(reports, cfg.format), cfg.output)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "generate":
            return _generate(args)
        if args.command == "factor":
            return _factor(args)
        if args.command == "solve":
            return _single(args, args.method)
        if args.command == "pcg":
            return _single(args, "pcg")
        return _bench(args)
    except UsageError as err:
        return _fail(EXIT_USAGE, "usage", err)
    except (ValueError, FileNotFoundError) as err:
        return _fail(EXIT_USAGE, "usage", err)
    except (AcrError, MemoryError) as err:
        return _fail(EXIT_SOLVER, type(err).__name__, err)


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
