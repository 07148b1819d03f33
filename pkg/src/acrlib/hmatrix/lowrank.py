"""Truncated SVD helpers for factored blocks ``U @ V.T``.

Truncation keeps singular values ``s_i > eps * s_0``. Larger matrices are
first reduced with a column-pivoted QR at a threshold two orders of magnitude
below ``eps``; the SVD and the final cut are then taken on the reduced factor.
"""

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

_EPS = np.finfo(float).eps
# QR pre-reduction safety margin below the truncation threshold
PREREDUCE_MARGIN = 1e-2
# below this size a direct SVD is cheaper than the pivoted QR pass
DIRECT_SVD_SIZE = 16


def keep_count(s, eps, floor=0.0):
    """Number of leading singular values with ``s_i > eps * s_0`` and ``s_i > floor``."""
    if len(s) == 0 or s[0] <= floor:
        return 0
    return int(np.count_nonzero((s > eps * s[0]) & (s > floor)))


def _svd(M):
    u, s, vt, info = lapack.dgesdd(M, full_matrices=0)
    if info:
        return scipy.linalg.svd(M, full_matrices=False, check_finite=False, lapack_driver="gesvd")
    return u, s, vt


def _direct(M, eps, floor):
    u, s, vt = _svd(M)
    k = keep_count(s, eps, floor)
    return u[:, :k] * s[:k], vt[:k].T.copy()


def truncated_svd(M, eps, floor=0.0):
    """Factors ``(U, V)`` of the truncated SVD of ``M``, singular values folded into ``U``."""
    m, n = M.shape
    if m == 0 or n == 0:
        return np.zeros((m, 0)), np.zeros((n, 0))
    if min(m, n) <= DIRECT_SVD_SIZE:
        return _direct(M, eps, floor)
    transposed = m < n
    A = M.T if transposed else M
    qr, jpvt, tau, _, info = lapack.dgeqp3(A)
    if info:
        return _direct(M, eps, floor)
    d = np.abs(np.diag(qr))
    if d[0] == 0.0:
        return np.zeros((m, 0)), np.zeros((n, 0))
    r = int(np.count_nonzero(d > max(PREREDUCE_MARGIN * eps * d[0], PREREDUCE_MARGIN * floor)))
    if r == 0:
        return np.zeros((m, 0)), np.zeros((n, 0))
    if 2 * r > min(m, n):
        return _direct(M, eps, floor)
    # A[:, jpvt - 1] = Q R  ->  A = Q (R P^T)
    R = np.zeros((r, A.shape[1]))
    R[:, jpvt - 1] = np.triu(qr[:r])
    q, _, _ = lapack.dorgqr(qr[:, :r], tau[:r])
    u, s, vt = _svd(R)
    k = keep_count(s, eps, floor)
    left = q @ (u[:, :k] * s[:k])
    right = vt[:k].T
    return (right.copy(), left) if transposed else (left, right.copy())


def compress_dense(M, eps):
    """Truncated SVD of a dense block to relative accuracy ``eps``."""
    scale = np.abs(M).max() if M.size else 0.0
    return truncated_svd(M, eps, floor=_EPS * max(M.shape, default=0) * scale)


def truncate(U, V, eps, scale=None):
    """Recompress ``U @ V.T`` to relative accuracy ``eps``.

    ``scale`` bounds the magnitude of the terms that were summed into ``U, V``
    before cancellation; singular values below roundoff of that scale are
    dropped so that ``A - A`` comes out with rank zero.
    """
    m, K = U.shape
    n = V.shape[0]
    if K == 0:
        return U, V
    if scale is None:
        scale = _fro(U) * _fro(V)
    floor = 8 * _EPS * scale
    if 2 * K >= min(m, n):
        return truncated_svd(U @ V.T, eps, floor)
    qu, ru = _qr(U)
    qv, rv = _qr(V)
    a, b = truncated_svd(ru @ rv.T, eps, floor)
    return qu @ a, qv @ b


def _qr(A):
    """Thin QR through raw LAPACK calls (the scipy wrapper overhead dominates at leaf size)."""
    k = A.shape[1]
    qr, tau, _, info = lapack.dgeqrf(A)
    if info:
        return scipy.linalg.qr(A, mode="economic", check_finite=False)
    r = np.triu(qr[:k])
    q, _, _ = lapack.dorgqr(qr, tau)
    return q[:, :k], r


def add_factored(U1, V1, U2, V2, eps):
    """Recompressed sum of two factored blocks; rank never exceeds ``k1 + k2``."""
    return sum_factored([(U1, V1), (U2, V2)], eps)


def sum_factored(terms, eps):
    """Recompressed sum of several factored blocks, truncated once."""
    m, n = terms[0][0].shape[0], terms[0][1].shape[0]
    terms = [(u, v) for u, v in terms if u.shape[1]]
    if not terms:
        return np.zeros((m, 0)), np.zeros((n, 0))
    U = np.hstack([u for u, _ in terms])
    V = np.hstack([v for _, v in terms])
    # ||U||_F ||V||_F bounds sum ||u_i|| ||v_i|| (Cauchy-Schwarz)
    return truncate(U, V, eps)


def _fro(A):
    return np.sqrt(np.einsum("ij,ij->", A, A))
