import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from acrlib.acr import DENSE_CONFIG, AcrConfig, acr_factor, acr_solve
from acrlib.core import BlockTridiagonalSystem, PlaneBlock
from acrlib.discretize import assemble_poisson, ProblemSpec
from acrlib.errors import ScheduleError, SingularBlockError
from acrlib.parallel import critical_path_length, execute_parallel_factor, execute_parallel_solve, plan_schedule


def test_plan_16_4_by_hand():
    plan = plan_schedule(16, 4)
    assert plan.assignment[0] == tuple(k // 4 for k in range(16))
    assert plan.assignment[1] == (0, 0, 1, 1, 2, 2, 3, 3)
    assert plan.assignment[2] == (0, 1, 2, 3)
    assert plan.assignment[3] == (1, 3)
    assert plan.assignment[4] == (3,)
    assert plan.c_level == 2
    assert [plan.active_workers(i) for i in range(plan.n_levels)] == [4, 4, 4, 2, 1]


def test_critical_path_by_hand():
    # 16 planes on 4 workers: 2 + 1 eliminations before the C-level, then 2 one-row levels
    assert critical_path_length(plan_schedule(16, 4)) == 5
    assert critical_path_length(plan_schedule(16, 1)) == 8 + 4 + 2 + 1
    assert critical_path_length(plan_schedule(16, 16)) == 4
    assert critical_path_length(plan_schedule(64, 8)) == 4 + 2 + 1 + 3


@given(st.integers(0, 7), st.data())
def test_active_workers_halve_past_c_level(log_n, data):
    n = 2**log_n
    p = 2 ** data.draw(st.integers(0, log_n))
    plan = plan_schedule(n, p)
    for i in range(plan.n_levels):
        expect = p if i <= plan.c_level else p >> (i - plan.c_level)
        assert plan.active_workers(i) == expect
    assert critical_path_length(plan) >= plan.n_levels - 1


@pytest.mark.parametrize("n,p", [(12, 4), (16, 3), (8, 16), (16, 0)])
def test_bad_plans(n, p):
    with pytest.raises(ScheduleError):
        plan_schedule(n, p)


@pytest.fixture(scope="module")
def poisson16():
    return assemble_poisson(16)


def test_dense_bitwise_across_workers(poisson16):
    s = poisson16
    ref_fact = acr_factor(s, DENSE_CONFIG)
    ref = np.concatenate(acr_solve(ref_fact, s.f))
    for p in (1, 2, 4, 8):
        plan = plan_schedule(16, p)
        fact, ledger_f = execute_parallel_factor(s, plan, DENSE_CONFIG)
        u, ledger_s = execute_parallel_solve(fact, plan, s.f)
        assert np.array_equal(np.concatenate(u), ref)
        if p == 1:
            assert ledger_f.total_messages == ledger_s.total_messages == 0


@pytest.mark.parametrize("p", [2, 4, 8])
def test_ledger_neighbour_only(poisson16, p):
    plan = plan_schedule(16, p)
    fact, lf = execute_parallel_factor(poisson16, plan, DENSE_CONFIG)
    _, ls = execute_parallel_solve(fact, plan, poisson16.f)
    for ledger in (lf, ls):
        assert ledger.total_messages > 0
        for lev in ledger.levels:
            for src_plane, dst_plane, src_w, dst_w in lev.edges:
                assert abs(src_plane - dst_plane) == 2**lev.level
                # adjacent among the workers still active at this level
                assert abs(src_w - dst_w) == 2 ** max(0, lev.level - plan.c_level)
        assert ledger.to_dict()["total_bytes"] == ledger.total_bytes > 0


def test_remote_edges_match_ledger(poisson16):
    plan = plan_schedule(16, 4)
    _, lf = execute_parallel_factor(poisson16, plan, DENSE_CONFIG)
    for i, lev in enumerate(lf.levels):
        assert lev.messages == len(plan.remote_edges(i))


def test_hmatrix_bitwise_across_workers():
    s, _ = ProblemSpec("convdiff", 8, alpha=10.0).build()
    cfg = AcrConfig(eps=1e-4, leaf_size=8)
    ref = np.concatenate(acr_solve(acr_factor(s, cfg), s.f))
    for p in (2, 4):
        plan = plan_schedule(8, p)
        fact, _ = execute_parallel_factor(s, plan, cfg)
        u, _ = execute_parallel_solve(fact, plan, s.f)
        assert np.array_equal(np.concatenate(u), ref)


def test_worker_failure_propagates():
    s = assemble_poisson(8)
    D = list(s.D)
    D[4] = PlaneBlock(sp.csr_array((64, 64)), s.coords)
    bad = BlockTridiagonalSystem(D, s.E, s.F, s.f)
    with pytest.raises(SingularBlockError) as exc:
        execute_parallel_factor(bad, plan_schedule(8, 4), DENSE_CONFIG)
    assert exc.value.plane == 4


def test_plan_mismatch():
    with pytest.raises(ScheduleError):
        execute_parallel_factor(assemble_poisson(4), plan_schedule(8, 2), DENSE_CONFIG)
