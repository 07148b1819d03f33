import json

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, strategies as st

from acrlib.cli import main
from acrlib.report import CSV_COLUMNS, RunConfig, SolveReport, emit, parse, run, sweep

SMALL = dict(n=8, leaf=8)


def test_config_validation():
    for bad in (dict(problem="maxwell"), dict(mode="lu"), dict(n=0), dict(eps=0.0), dict(format="xml"), dict(rhs="x")):
        with pytest.raises(ValueError):
            RunConfig(**bad)
    cfg = RunConfig(mode="pcg")
    assert cfg.tolerance == 1e-6
    assert RunConfig(mode="refine").tolerance == 1e-10
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
maybe = lambda s: st.none() | s


@st.composite
def reports(draw):
    cfg = RunConfig(
        problem=draw(st.sampled_from(["poisson", "convdiff", "helmholtz"])),
        n=draw(st.integers(2, 64)),
        eps=draw(st.floats(1e-8, 1.0)),
        workers=draw(st.sampled_from([1, 2, 4])),
    )
    return SolveReport(
        config=cfg.to_dict(),
        status=draw(st.sampled_from(["ok", "error"])),
        relative_residual=draw(maybe(finite)),
        average_rank=draw(finite),
        largest_rank=draw(st.integers(0, 100)),
        factor_bytes=draw(st.integers(0, 2**40)),
        peak_bytes=draw(st.integers(0, 2**40)),
        peak_measured=draw(st.booleans()),
        t_factor=draw(finite),
        t_solve=draw(finite),
        iterations=draw(maybe(st.integers(0, 500))),
        trace=draw(maybe(st.fixed_dictionaries({"iterations": st.integers(0, 9), "residual_history": st.lists(finite)}))),
        levels=draw(maybe(st.lists(st.fixed_dictionaries({"level": st.integers(0, 9), "bytes": st.integers(0, 10**9)})))),
        error=draw(maybe(st.text())),
    )


@given(st.lists(reports(), min_size=1, max_size=4), st.sampled_from(["json", "csv"]))
def test_serialisation_roundtrip(reps, fmt):
    back = parse(emit(reps, fmt), fmt)
    assert back == reps


def test_csv_header_fixed():
    text = emit([SolveReport(config=RunConfig().to_dict())], "csv")
    assert text.splitlines()[0].split(",") == list(CSV_COLUMNS)
    with pytest.raises(ValueError):
        parse(text.replace("csv_version", "version", 1), "csv")


def test_run_deterministic_modulo_timing():
    cfg = RunConfig(rhs="random", seed=7, eps=1e-3, **SMALL)
    a, b = run(cfg), run(cfg)
    assert a.status == "ok"
    assert a.without_timings() == b.without_timings()
    assert run(RunConfig(rhs="random", seed=8, eps=1e-3, **SMALL)).relative_residual != a.relative_residual


def test_run_modes():
    r = run(RunConfig(problem="convdiff", alpha=10.0, mode="refine", eps=1e-2, **SMALL))
    assert r.status == "ok" and r.relative_residual <= 1e-10 and r.trace["converged"]
    assert r.error_vs_exact < 1e-8
    p = run(RunConfig(mode="pcg", eps=1e-1, **SMALL))
    assert p.iterations >= 1 and p.relative_residual <= 1e-6
    d = run(RunConfig(mode="cr-dense", n=4))
    assert d.relative_residual < 1e-12 and d.largest_rank == 0
    w = run(RunConfig(workers=2, **SMALL))
    assert w.ledger["factor"]["total_messages"] > 0


def test_peak_measurement():
    r = run(RunConfig(measure_peak=True, **SMALL))
    assert r.peak_measured and r.peak_bytes > 0
    plain = run(RunConfig(**SMALL))
    assert not plain.peak_measured and plain.peak_bytes == plain.factor_bytes


def test_sweep_keeps_going():
    reps = sweep(RunConfig(**SMALL), "eps", [1e-1, -1.0, 1e-3])
    assert [r.status for r in reps] == ["ok", "error", "ok"]
    assert reps[0].relative_residual > reps[2].relative_residual
    with pytest.raises(ValueError):
        sweep(RunConfig(), "eps", [])


# --- command line ---------------------------------------------------------


def test_cli_solve_csv(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["solve", "--n", "8", "--leaf", "8", "-o", str(out)]) == 0
    (rep,) = parse(out.read_text(), "csv")
    assert rep.status == "ok" and rep.config["n"] == 8


def test_cli_workers_env(tmp_path, monkeypatch):
    monkeypatch.setenv("ACR_WORKERS", "2")
    out = tmp_path / "r.json"
    assert main(["solve", "--n", "8", "--leaf", "8", "-o", str(out)]) == 0
    assert parse(out.read_text()).config["workers"] == 2


def test_cli_usage_errors(tmp_path, capsys):
    out = tmp_path / "never.json"
    assert main(["solve", "--n", "0", "-o", str(out)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 2
    assert main(["bench", "--sweep", "eps", "--values", "", "-o", str(out)]) == 2
    assert main(["bench", "--sweep", "colour", "--values", "1", "-o", str(out)]) == 2
    assert main(["frobnicate"]) == 2
    assert not out.exists()


def test_cli_generate_then_solve(tmp_path):
    sysdir = tmp_path / "sys"
    assert main(["generate", "--problem", "convdiff", "--alpha", "5", "--n", "4", "--out", str(sysdir)]) == 0
    out = tmp_path / "r.json"
    assert main(["solve", "--system", str(sysdir), "--method", "cr-dense", "-o", str(out)]) == 0
    assert parse(out.read_text()).relative_residual < 1e-12


def test_cli_solver_failure(tmp_path, capsys):
    sysdir = tmp_path / "sys"
    main(["generate", "--n", "4", "--out", str(sysdir)])
    scipy.io.mmwrite(sysdir / "D_0.mtx", sp.coo_matrix((16, 16)))
    assert main(["solve", "--system", str(sysdir), "--method", "cr-dense"]) == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 3 and "SingularBlockError" in err["message"]


def test_cli_bench_and_factor(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bench", "--n", "8", "--leaf", "8", "--sweep", "eps", "--values", "1e-1,1e-3", "-o", str(out)]) == 0
    reps = parse(out.read_text())
    assert [r.config["eps"] for r in reps] == [0.1, 0.001]
    fout = tmp_path / "f.json"
    assert main(["factor", "--n", "8", "--leaf", "8", "-o", str(fout)]) == 0
    assert json.loads(fout.read_text())["depth"] == 3
