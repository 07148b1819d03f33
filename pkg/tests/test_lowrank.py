import numpy as np
import pytest
from hypothesis import given, strategies as st

from acrlib.hmatrix.lowrank import add_factored, compress_dense, keep_count, sum_factored, truncate, truncated_svd


def test_keep_count_relative():
    s = np.array([10.0, 1.0, 0.5, 1e-3])
    assert keep_count(s, 0.05) == 2  # 0.5 sits exactly on the threshold
    assert keep_count(s, 1e-2) == 3
    assert keep_count(s, 1e-2, floor=0.7) == 2
    assert keep_count(np.zeros(3), 0.1) == 0
    assert keep_count(np.array([]), 0.1) == 0


def low_rank(rng, m, n, r):
    return rng.standard_normal((m, r)) @ rng.standard_normal((r, n))


@pytest.mark.parametrize("shape", [(40, 40), (60, 25), (25, 60), (8, 5)])
def test_exact_rank_recovered(rng, shape):
    M = low_rank(rng, *shape, 3)
    U, V = compress_dense(M, 1e-10)
    assert U.shape[1] == 3
    assert np.allclose(U @ V.T, M)


@given(st.integers(2, 50), st.integers(2, 50), st.sampled_from([1e-1, 1e-2, 1e-4]), st.integers(0, 2**31 - 1))
def test_truncation_error_bound(m, n, eps, seed):
    rng = np.random.default_rng(seed)
    # geometrically decaying spectrum
    q1, _ = np.linalg.qr(rng.standard_normal((m, min(m, n))))
    q2, _ = np.linalg.qr(rng.standard_normal((n, min(m, n))))
    s = 0.5 ** np.arange(min(m, n))
    M = (q1 * s) @ q2.T
    U, V = truncated_svd(M, eps)
    err = np.linalg.norm(M - U @ V.T, 2)
    assert err <= eps * s[0] * (1 + 1e-6) + 1e-12
    assert U.shape[1] == keep_count(s, eps)


def test_cancellation_gives_rank_zero(rng):
    U, V = rng.standard_normal((30, 4)), rng.standard_normal((20, 4))
    W, Z = add_factored(U, V, -U, V, 1e-3)
    assert W.shape == (30, 0) and Z.shape == (20, 0)


def test_sum_rank_bounded(rng):
    terms = [(rng.standard_normal((30, 2)), rng.standard_normal((30, 2))) for _ in range(3)]
    U, V = sum_factored(terms, 1e-14)
    assert U.shape[1] <= 6
    full = sum(u @ v.T for u, v in terms)
    assert np.allclose(U @ V.T, full)


def test_truncate_empty_and_tall(rng):
    U, V = truncate(np.zeros((5, 0)), np.zeros((7, 0)), 1e-3)
    assert U.shape == (5, 0)
    U0, V0 = rng.standard_normal((50, 20)), rng.standard_normal((40, 20))
    U1, V1 = truncate(U0, V0, 1e-12)
    assert np.allclose(U1 @ V1.T, U0 @ V0.T)


def test_zero_and_empty_blocks():
    U, V = truncated_svd(np.zeros((20, 30)), 1e-3)
    assert U.shape == (20, 0) and V.shape == (30, 0)
    U, V = truncated_svd(np.zeros((0, 3)), 1e-3)
    assert U.shape == (0, 0)
