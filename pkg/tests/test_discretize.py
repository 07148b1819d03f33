import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from acrlib.core import apply, flatten
from acrlib.discretize import (
    ProblemSpec,
    assemble_convdiff,
    assemble_helmholtz,
    assemble_poisson,
    convdiff_exact,
    fem_1d,
    vortex_field,
)


def second_difference(n):
    return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n))


def laplace3d(n):
    T, I = second_difference(n), sp.identity(n)
    return sp.kron(sp.kron(T, I), I) + sp.kron(sp.kron(I, T), I) + sp.kron(sp.kron(I, I), T)


def test_poisson_n2_by_hand():
    s = assemble_poisson(2)
    expected_D = np.array(
        [[6, -1, -1, 0], [-1, 6, 0, -1], [-1, 0, 6, -1], [0, -1, -1, 6]], dtype=float
    )
    assert np.array_equal(s.D[0].toarray(), expected_D)
    assert np.array_equal(s.E[0].toarray(), -np.eye(4))
    assert np.allclose(flatten(s.f), (1 / 3) ** 2)


@pytest.mark.parametrize("n", [3, 5, 8])
def test_poisson_matches_kron_laplacian(n):
    A = assemble_poisson(n).tosparse()
    assert abs(A - laplace3d(n)).max() == 0


@pytest.mark.parametrize("n", [3, 6])
def test_helmholtz_matches_tensor_fem(n):
    kappa = 2.5
    K, M = fem_1d(n)
    A_ref = (
        sp.kron(sp.kron(K, M), M) + sp.kron(sp.kron(M, K), M) + sp.kron(sp.kron(M, M), K)
        - kappa**2 * sp.kron(sp.kron(M, M), M)
    )
    A = assemble_helmholtz(n, kappa).tosparse()
    assert abs(A - A_ref).max() < 1e-13


def test_helmholtz_27_point_stencil():
    n = 5
    A = assemble_helmholtz(n, 1.0).tosparse().tocsr()
    centre = (2 * n + 2) * n + 2  # node (2, 2, 2)
    assert A.indptr[centre + 1] - A.indptr[centre] == 27
    # stiffness part annihilates constants away from the boundary
    K = assemble_helmholtz(n, 0.0).tosparse()
    assert abs((K @ np.ones(n**3))[centre]) < 1e-12


def test_vortex_field_at_origin():
    bx, by, bz = vortex_field(np.array(0.0), np.array(0.0), np.array(0.0))
    assert bx == pytest.approx(0.0)
    assert by == pytest.approx(np.sqrt(2))
    assert bz == pytest.approx(np.sqrt(2) / 2)


@pytest.mark.parametrize("n", [3, 7])
def test_convdiff_alpha0_is_poisson_operator(n):
    s, _ = assemble_convdiff(n, 0.0)
    assert abs(s.tosparse() - laplace3d(n)).max() < 1e-14


@given(st.integers(2, 6), st.sampled_from([0.0, 1.0, 10.0, 1000.0]), st.floats(0.5, 2.0))
def test_convdiff_exact_and_m_matrix(n, alpha, a):
    s, exact = assemble_convdiff(n, alpha, a)
    assert np.allclose(flatten(apply(s, exact)), flatten(s.f))
    A = s.tosparse().toarray()
    off = A - np.diag(np.diag(A))
    assert np.all(off <= 0)
    assert np.all(A.sum(axis=1) >= -1e-9 * np.abs(A).max())
    assert len(s.E) == len(s.F) == n - 1


@pytest.mark.parametrize("alpha", [10.0, 100.0])
def test_convdiff_nonsymmetric(alpha):
    s, _ = assemble_convdiff(6, alpha)
    A = s.tosparse()
    assert abs(A - A.T).max() > 1e-3
    assert not s.is_symmetric(tol=1e-12)


def test_symmetric_kinds():
    assert assemble_poisson(4).is_symmetric()
    assert assemble_helmholtz(4, 2.0).is_symmetric(tol=1e-14)


def test_exact_solution_formula():
    u = convdiff_exact(3)
    # node (1, 1, 1) sits at x = y = z = 1/2
    assert u[1][4] == pytest.approx(3 * (1.0 + np.sin(1.5 * np.pi)))


def test_problem_spec_defaults():
    spec = ProblemSpec("helmholtz", 32)
    assert spec.wavenumber == 16
    assert spec.points_per_wavelength() == pytest.approx(2 * np.pi * 33 / 16)
    system, exact = spec.build()
    assert exact is None and system.n_planes == 32 and system.dim == 1024
    with pytest.raises(ValueError):
        ProblemSpec("wave", 4)
    with pytest.raises(ValueError):
        ProblemSpec("convdiff", 4, alpha=-1.0)


@pytest.mark.parametrize("n,kappa", [(3, 2.0), (4, 7.3)])
def test_resonance_gap_matches_dense_eigenvalues(n, kappa):
    import scipy.linalg

    from acrlib.discretize import helmholtz_resonance_gap

    K = assemble_helmholtz(n, 0.0).tosparse().toarray()
    M = (K - assemble_helmholtz(n, 1.0).tosparse().toarray())  # = M3
    lam = scipy.linalg.eigh(K, M, eigvals_only=True)
    assert helmholtz_resonance_gap(n, kappa) == pytest.approx(np.min(np.abs(lam - kappa**2)) / kappa**2)


def test_default_wavenumbers_nonresonant():
    from acrlib.discretize import helmholtz_resonance_gap

    for n in (8, 16, 32, 64):
        assert helmholtz_resonance_gap(n, n / 2) > 1e-3
