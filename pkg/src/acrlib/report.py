"""Run configurations, solve reports and their JSON / CSV forms."""

from __future__ import annotations

import csv
import io
import json
import math
import time
import tracemalloc
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .acr import AcrConfig, acr_factor, acr_solve
from .core import flatten, import_system, relative_residual
from .discretize import KINDS, ProblemSpec
from .errors import AcrError
from .krylov import iterative_refinement, pcg
from .parallel import execute_parallel_factor, execute_parallel_solve, plan_schedule

RUN_MODES = ("acr", "cr-dense", "pcg", "refine")
FORMATS = ("json", "csv")
CSV_VERSION = 1
TIMING_FIELDS = ("t_factor", "t_solve")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one run.

    ``system`` points to a Matrix Market directory written by ``generate``;
    when set it replaces the generated problem. ``rhs="random"`` draws a
    right-hand side from ``seed``.
    """

    problem: str = "poisson"
    n: int = 8
    alpha: float = 0.0
    a: float = 1.0
    kappa: float | None = None
    system: str | None = None
    mode: str = "acr"
    eps: float = 1e-3
    eta: float = 2.0
    leaf: int = 32
    admissibility: str = "standard"
    workers: int = 1
    seed: int = 0
    rhs: str = "problem"
    tol: float | None = None
    maxit: int = 500
    measure_peak: bool = False
    output: str | None = None
    format: str = "json"

    def __post_init__(self):
        if self.problem not in KINDS:
            raise ValueError(f"problem must be one of {KINDS}, got {self.problem!r}")
        if self.mode not in RUN_MODES:
            raise ValueError(f"mode must be one of {RUN_MODES}, got {self.mode!r}")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.rhs not in ("problem", "random"):
            raise ValueError(f"rhs must be 'problem' or 'random', got {self.rhs!r}")
        for name in ("n", "leaf", "workers", "maxit"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("eps", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.tol is not None and not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def problem_spec(self) -> ProblemSpec:
        return ProblemSpec(self.problem, self.n, self.alpha, self.a, self.kappa)

    @property
    def acr_config(self) -> AcrConfig:
        if self.mode == "cr-dense":
            return AcrConfig(mode="dense")
        return AcrConfig(eps=self.eps, eta=self.eta, leaf_size=self.leaf, admissibility=self.admissibility)

    @property
    def tolerance(self) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-6 if self.mode == "pcg" else 1e-10

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class SolveReport:
    """Outcome of one run; ``status`` is ``"ok"`` or ``"error"``."""

    config: dict
    status: str = "ok"
    relative_residual: float | None = None
    average_rank: float = 0.0
    largest_rank: int = 0
    factor_bytes: int = 0
    peak_bytes: int = 0
    peak_measured: bool = False
    t_factor: float = 0.0
    t_solve: float = 0.0
    iterations: int | None = None
    trace: dict | None = None
    ledger: dict | None = None
    levels: list | None = None
    error_vs_exact: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "SolveReport":
        return cls(**data)

    def without_timings(self) -> dict:
        """Report content that must be reproducible run to run."""
        d = self.to_dict()
        for k in TIMING_FIELDS:
            d.pop(k)
        if d["trace"]:
            d["trace"] = {k: v for k, v in d["trace"].items() if k not in ("apply_time", "apply_total", "total_time")}
        if d["levels"]:
            d["levels"] = [{k: v for k, v in lev.items() if k != "seconds"} for lev in d["levels"]]
        if self.peak_measured:
            d.pop("peak_bytes")
        return d


# ---------------------------------------------------------------------------
# execution


def load_system(cfg: RunConfig):
    if cfg.system:
        return import_system(cfg.system), None
    return cfg.problem_spec.build()


def _rhs(cfg, system):
    if cfg.rhs == "problem":
        return list(system.f)
    rng = np.random.default_rng(cfg.seed)
    return list(rng.standard_normal((system.n_planes, system.dim)))


def run(cfg: RunConfig) -> SolveReport:
    """Execute one configuration; solver failures become ``status="error"`` reports.

    Invalid configurations raise before anything is computed.
    """
    system, exact = load_system(cfg)
    f = _rhs(cfg, system)
    system = system.with_rhs(f)
    report = SolveReport(config=cfg.to_dict())
    if cfg.measure_peak:
        tracemalloc.start()
    try:
        _execute(cfg, system, f, exact, report)
    except AcrError as err:
        report.status = "error"
        report.error = f"{type(err).__name__}: {err}"
    finally:
        if cfg.measure_peak:
            report.peak_bytes = int(tracemalloc.get_traced_memory()[1])
            report.peak_measured = True
            tracemalloc.stop()
    if not report.peak_measured:
        report.peak_bytes = report.factor_bytes
    return report


def _execute(cfg, system, f, exact, report):
    t0 = time.perf_counter()
    if cfg.workers > 1:
        plan = plan_schedule(system.n_planes, cfg.workers)
        fact, ledger_f = execute_parallel_factor(system, plan, cfg.acr_config)
    else:
        fact = acr_factor(system, cfg.acr_config)
        plan = ledger_f = None
    report.t_factor = time.perf_counter() - t0
    st = fact.rank_stats()
    report.average_rank = float(st.average_rank)
    report.largest_rank = int(st.largest_rank)
    report.factor_bytes = int(fact.factor_bytes)
    report.levels = fact.level_report()
    t1 = time.perf_counter()
    if cfg.mode in ("acr", "cr-dense"):
        if plan is not None:
            u, ledger_s = execute_parallel_solve(fact, plan, f)
            report.ledger = {"factor": ledger_f.to_dict(), "solve": ledger_s.to_dict(), "plan": plan.to_dict()}
        else:
            u = acr_solve(fact, f)
    elif cfg.mode == "pcg":
        u, trace = pcg(system, fact, f, tol=cfg.tolerance, maxit=cfg.maxit)
        report.trace = trace.to_dict()
        report.iterations = trace.iterations
    else:
        u, trace = iterative_refinement(fact, system, f, tol=cfg.tolerance, maxit=cfg.maxit)
        report.trace = trace.to_dict()
        report.iterations = trace.iterations
    report.t_solve = time.perf_counter() - t1
    report.relative_residual = relative_residual(system, u, f)
    if exact is not None and cfg.rhs == "problem":
        ex = flatten(exact)
        report.error_vs_exact = float(np.linalg.norm(flatten(u) - ex) / np.linalg.norm(ex))


def sweep(template: RunConfig, axis: str, values) -> list:
    """One report per value of ``axis``, in the given order; failures do not abort."""
    values = list(values)
    if not values:
        raise ValueError("sweep axis needs at least one value")
    if axis not in {f.name for f in fields(RunConfig)}:
        raise ValueError(f"unknown sweep axis {axis!r}")
    reports = []
    for v in values:
        try:
            reports.append(run(replace(template, **{axis: v})))
        except (AcrError, ValueError, MemoryError) as err:
            config = {**template.to_dict(), axis: v}
            reports.append(SolveReport(config=config, status="error", error=f"{type(err).__name__}: {err}"))
    return reports


# ---------------------------------------------------------------------------
# serialisation

CSV_COLUMNS = (
    "csv_version",
    "status",
    "problem",
    "n",
    "mode",
    "eps",
    "eta",
    "leaf",
    "workers",
    "relative_residual",
    "average_rank",
    "largest_rank",
    "factor_bytes",
    "peak_bytes",
    "peak_measured",
    "t_factor",
    "t_solve",
    "iterations",
    "error_vs_exact",
    "error",
    "config",
    "trace",
    "ledger",
    "levels",
)
_JSON_COLUMNS = ("config", "trace", "ledger", "levels", "error")
_ECHO_COLUMNS = ("problem", "n", "mode", "eps", "eta", "leaf", "workers")


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def to_json(reports) -> str:
    single = isinstance(reports, SolveReport)
    data = [_clean(r.to_dict()) for r in ([reports] if single else reports)]
    return json.dumps(data[0] if single else data, indent=2, sort_keys=True) + "\n"


def from_json(text):
    data = json.loads(text)
    if isinstance(data, list):
        return [SolveReport.from_dict(d) for d in data]
    return SolveReport.from_dict(data)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(reports) -> str:
    if isinstance(reports, SolveReport):
        reports = [reports]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        d = r.to_dict()
        row = []
        for col in CSV_COLUMNS:
            if col == "csv_version":
                row.append(str(CSV_VERSION))
            elif col in _JSON_COLUMNS:
                row.append("" if d[col] is None else json.dumps(_clean(d[col]), sort_keys=True))
            elif col in _ECHO_COLUMNS:
                row.append(_cell(d["config"][col]))
            else:
                row.append(_cell(d[col]))
        w.writerow(row)
    return buf.getvalue()


_TYPES = {
    "relative_residual": float,
    "average_rank": float,
    "largest_rank": int,
    "factor_bytes": int,
    "peak_bytes": int,
    "t_factor": float,
    "t_solve": float,
    "iterations": int,
    "error_vs_exact": float,
}


def from_csv(text) -> list:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("unexpected CSV header; columns are fixed for this report version")
    out = []
    for row in rows[1:]:
        cells = dict(zip(CSV_COLUMNS, row))
        if int(cells["csv_version"]) != CSV_VERSION:
            raise ValueError(f"unsupported CSV report version {cells['csv_version']}")
        d = {}
        for f in fields(SolveReport):
            raw = cells[f.name]
            if f.name in _JSON_COLUMNS:
                d[f.name] = json.loads(raw) if raw else None
            elif f.name == "peak_measured":
                d[f.name] = raw == "True"
            elif raw == "":
                d[f.name] = None
            elif f.name in _TYPES:
                d[f.name] = _TYPES[f.name](raw)
            else:
                d[f.name] = raw
        out.append(SolveReport(**d))
    return out


def emit(reports, fmt="json") -> str:
    if fmt == "json":
        return to_json(reports)
    if fmt == "csv":
        return to_csv(reports)
    raise ValueError(f"unknown report format {fmt!r}")


def parse(text, fmt="json"):
    if fmt == "json":
        return from_json(text)
    if fmt == "csv":
        return from_csv(text)
    raise ValueError(f"unknown report format {fmt!r}")
