import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, strategies as st

from acrlib.acr import (
    DENSE_CONFIG,
    AcrConfig,
    Diagonal,
    Scaled,
    acr_factor,
    acr_solve,
    cr_dense_factor,
    dense_cr_bytes,
    level_origin,
    level_sizes,
)
from acrlib.core import BlockTridiagonalSystem, PlaneBlock, flatten, relative_residual
from acrlib.discretize import ProblemSpec, assemble_poisson
from acrlib.errors import SingularBlockError


def scalar_system(diag, off, f):
    c = np.zeros((1, 2))
    blk = lambda v: PlaneBlock(sp.csr_array(np.array([[v]], dtype=float)), c)
    n = len(diag)
    return BlockTridiagonalSystem(
        [blk(d) for d in diag], [blk(off)] * (n - 1), [blk(off)] * (n - 1), [np.array([v]) for v in f]
    )


def test_scalar_three_planes_by_hand():
    # 4a - b = 1, -a + 4b - c = 2, -b + 4c = 3
    s = scalar_system([4, 4, 4], -1, [1, 2, 3])
    u = flatten(acr_solve(acr_factor(s, DENSE_CONFIG), s.f))
    assert np.allclose(u, [13 / 28, 6 / 7, 27 / 28], rtol=0, atol=1e-15)


def random_system(seed, n_planes, dim):
    rng = np.random.default_rng(seed)
    coords = rng.random((dim, 2))

    def blk(shift=0.0):
        return PlaneBlock(sp.csr_array(rng.standard_normal((dim, dim)) + shift * np.eye(dim)), coords)

    return BlockTridiagonalSystem(
        [blk(6.0 * dim) for _ in range(n_planes)],
        [blk() for _ in range(n_planes - 1)],
        [blk() for _ in range(n_planes - 1)],
        [rng.standard_normal(dim) for _ in range(n_planes)],
    )


@given(st.integers(1, 13), st.integers(1, 5), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_dense_cr_matches_lu(n_planes, dim, stop, seed):
    s = random_system(seed, n_planes, dim)
    fact = acr_factor(s, AcrConfig(mode="dense", stop_planes=stop))
    u = flatten(acr_solve(fact, s.f))
    ref = np.linalg.solve(s.tosparse().toarray(), flatten(s.f))
    assert np.allclose(u, ref, rtol=1e-10, atol=1e-12)
    assert fact.factor_bytes == dense_cr_bytes(n_planes, dim, stop)


@pytest.mark.parametrize("kind", ["poisson", "convdiff", "helmholtz"])
@pytest.mark.parametrize("n", [2, 5, 6])
def test_dense_cr_pde_problems(kind, n):
    s, _ = ProblemSpec(kind, n, alpha=10.0).build()
    u = flatten(acr_solve(acr_factor(s, DENSE_CONFIG), s.f))
    ref = spla.spsolve(s.tosparse().tocsc(), flatten(s.f))
    assert np.linalg.norm(u - ref) <= 1e-10 * np.linalg.norm(ref)


def test_level_bookkeeping():
    assert level_sizes(8) == ([8, 4, 2], 1)
    assert level_sizes(7) == ([7, 3], 1)
    assert level_sizes(5, 2) == ([5], 2)
    assert level_sizes(1) == ([], 1)
    # kept position k at level i sits at original plane (k + 1) 2^i - 1
    assert [level_origin(2, k) for k in range(2)] == [3, 7]
    # 3 levels for 8 planes: 4 + 2 + 1 inverses + 7 + 3 + 1 couplings each side + top
    assert dense_cr_bytes(8, 2) == 8 * 4 * (4 + 2 + 1 + 2 * (7 + 3 + 1) + 1)


@pytest.mark.parametrize("kind", ["poisson", "convdiff", "helmholtz"])
def test_hmatrix_mode_accurate_at_tight_eps(kind):
    s, _ = ProblemSpec(kind, 8, alpha=10.0).build()
    fact = acr_factor(s, AcrConfig(eps=1e-8, leaf_size=8))
    assert relative_residual(s, acr_solve(fact, s.f)) < 1e-6


def test_residual_tracks_eps():
    s = assemble_poisson(8)
    res = []
    for eps in (1e-1, 1e-3, 1e-6):
        fact = acr_factor(s, AcrConfig(eps=eps, leaf_size=8))
        res.append(relative_residual(s, acr_solve(fact, s.f)))
    assert res[0] > res[1] > res[2]


def test_poisson_couplings_shared():
    s = assemble_poisson(8)
    fact = acr_factor(s, AcrConfig(eps=1e-4, leaf_size=8))
    lev0, lev1 = fact.levels[:2]
    assert all(isinstance(e, Diagonal) for e in lev0.E)
    # -E_j D^{-1} E_{j-1} with E = -I is a scaled view of a level-0 inverse
    assert all(isinstance(e, Scaled) and e.H is lev0.dinv[k + 1] for k, e in enumerate(lev1.E))
    assert fact.arith.nbytes(lev1.E[0]) < fact.arith.nbytes(lev0.dinv[0]) / 10
    dense = acr_factor(s, DENSE_CONFIG)
    perm = fact.arith.perm
    got = fact.arith.todense(lev1.E[1])  # tree order
    ref = dense.levels[1].E[1][np.ix_(perm, perm)]
    assert np.linalg.norm(got - ref) <= 1e-3 * np.linalg.norm(ref)


def test_transposed_system():
    s, _ = ProblemSpec("convdiff", 6, alpha=50.0).build()
    t = s.transpose()
    u = flatten(acr_solve(acr_factor(t, DENSE_CONFIG), s.f))
    ref = spla.spsolve(s.tosparse().T.tocsc(), flatten(s.f))
    assert np.allclose(u, ref)


def test_singular_plane_is_located():
    s = scalar_system([4, 4, 0, 4, 4], 0.0, [1, 1, 1, 1, 1])
    with pytest.raises(SingularBlockError) as exc:
        acr_factor(s, DENSE_CONFIG)
    assert exc.value.level == 0 and exc.value.plane == 2


def test_singular_plane_hmatrix():
    s = assemble_poisson(4)
    zero = PlaneBlock(sp.csr_array((16, 16)), s.coords)
    D = list(s.D)
    D[0] = zero
    bad = BlockTridiagonalSystem(D, s.E, s.F, s.f)
    with pytest.raises(SingularBlockError) as exc:
        acr_factor(bad, AcrConfig(leaf_size=4))
    assert exc.value.plane == 0


def test_factor_report_fields():
    fact = acr_factor(assemble_poisson(8), AcrConfig(eps=1e-2, leaf_size=8))
    js = fact.to_json()
    assert js["depth"] == 3 and js["n_planes"] == 8 and js["dim"] == 64
    assert [lev["planes"] for lev in js["levels"]] == [8, 4, 2]
    assert js["factor_bytes"] == fact.factor_bytes > 0
    assert js["largest_rank"] >= 1


def test_cr_dense_factor_alias():
    s = assemble_poisson(4)
    a = acr_solve(cr_dense_factor(s), s.f)
    b = acr_solve(acr_factor(s, DENSE_CONFIG), s.f)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_config_validation():
    with pytest.raises(ValueError):
        AcrConfig(mode="sparse")
    with pytest.raises(ValueError):
        AcrConfig(eps=0.0)
    with pytest.raises(ValueError):
        AcrConfig(stop_planes=0)
