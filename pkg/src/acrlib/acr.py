"""Block cyclic reduction in dense-block and H-matrix arithmetic.

Each elimination step removes the planes at even positions of the current
level and keeps the odd ones. For a kept plane ``j`` with neighbours
``j - 1`` and ``j + 1`` (both eliminated)::

    X = E_j D_{j-1}^{-1},   Y = F_j D_{j+1}^{-1}
    D'_j = D_j - X F_{j-1} - Y E_{j+1}
    E'_j = -X E_{j-1},      F'_j = -Y F_{j+1}
    f'_j = f_j - E_j D_{j-1}^{-1} f_{j-1} - F_j D_{j+1}^{-1} f_{j+1}

Terms whose neighbour does not exist are dropped. A level of ``m`` planes
yields ``m // 2`` planes, so any plane count reduces to a single plane
without padding. Back-substitution recovers the eliminated planes from
``u_j = D_j^{-1} (f_j - E_j u_{j-1} - F_j u_{j+1})``.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .core import BlockTridiagonalSystem, as_planes
from .errors import SingularBlockError
from .hmatrix import (
    HMatrix,
    RankStats,
    build_block_cluster_tree,
    build_cluster_tree,
    compress_sparse,
    hadd,
    hdiagscale,
    hinvert,
    hmuladd,
    hmultiply,
    memory_footprint,
    rank_stats,
)
from .hmatrix.hmat import CONDITION_CAP, DEFAULT_LEAF_BYTES_CAP

logger = logging.getLogger(__name__)

MODES = ("hmatrix", "dense")


@dataclass(frozen=True)
class AcrConfig:
    """Arithmetic used by the factorization.

    ``mode="dense"`` is classic block cyclic reduction with dense blocks;
    ``mode="hmatrix"`` is ACR with tolerance ``eps``, admissibility parameter
    ``eta`` and cluster-tree leaf size ``leaf_size``. Reduction stops once a
    level holds at most ``stop_planes`` planes; the remaining system is then
    inverted (one plane) or LU-factorised as a whole.
    """

    mode: str = "hmatrix"
    eps: float = 1e-3
    eta: float = 2.0
    leaf_size: int = 32
    admissibility: str = "standard"
    stop_planes: int = 1
    max_leaf_bytes: int = DEFAULT_LEAF_BYTES_CAP

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "hmatrix" and not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.leaf_size < 1:
            raise ValueError(f"leaf_size must be >= 1, got {self.leaf_size}")
        if self.stop_planes < 1:
            raise ValueError(f"stop_planes must be >= 1, got {self.stop_planes}")

    def to_dict(self):
        if self.mode == "dense":
            return {"mode": "dense", "stop_planes": self.stop_planes}
        return {
            "mode": "hmatrix",
            "eps": self.eps,
            "eta": self.eta,
            "leaf_size": self.leaf_size,
            "admissibility": self.admissibility,
            "stop_planes": self.stop_planes,
        }


DENSE_CONFIG = AcrConfig(mode="dense")


# ---------------------------------------------------------------------------
# arithmetic back ends


@dataclass(frozen=True, eq=False)
class Diagonal:
    """Diagonal plane block kept as its diagonal (tree order in H arithmetic)."""

    d: np.ndarray

    @property
    def nbytes(self):
        return self.d.nbytes


@dataclass(frozen=True, eq=False)
class Scaled:
    """Lazy ``diag(left) @ H @ diag(right)`` sharing the storage of ``H``.

    A diagonal coupling times an inverse is only a rescaled inverse; keeping
    it lazy avoids a second copy of every inverse on the next level.
    """

    H: HMatrix
    left: np.ndarray | None = None
    right: np.ndarray | None = None

    @property
    def shape(self):
        return self.H.shape

    @property
    def nbytes(self):
        return sum(d.nbytes for d in (self.left, self.right) if d is not None)

    def rescale(self, left=None, right=None) -> "Scaled":
        def combine(a, b):
            if a is None:
                return b
            return a if b is None else a * b

        return Scaled(self.H, combine(left, self.left), combine(self.right, right))

    def materialize(self) -> HMatrix:
        return hdiagscale(self.H, self.left, self.right, tree_order=True)

    def matvec(self, x):
        if self.right is not None:
            x = self.right * x
        y = self.H.matvec_tree(x)
        return y if self.left is None else self.left * y


def _dense_lu_inverse(M):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    if not np.all(np.isfinite(lu)) or np.any(np.diag(lu) == 0.0):
        raise SingularBlockError("exactly singular pivot block")
    inv = scipy.linalg.lu_solve((lu, piv), np.eye(M.shape[0]), check_finite=False)
    cond = np.linalg.norm(M, 1) * np.linalg.norm(inv, 1)
    if not np.isfinite(cond) or cond > CONDITION_CAP:
        raise SingularBlockError(f"pivot block has condition estimate {cond:.3e}")
    return inv


class DenseArithmetic:
    """Dense ``dim x dim`` blocks; the oracle and the classic CR baseline."""

    name = "dense"

    def block(self, pb):
        return pb.matrix.toarray()

    def stored(self, pb, op):
        return op

    def invert(self, A):
        return _dense_lu_inverse(A)

    def mul(self, A, B, alpha=1.0):
        P = A @ B
        return P if alpha == 1.0 else alpha * P

    def muladd(self, C, A, B, alpha=1.0):
        return C + alpha * (A @ B)

    def matvec(self, A, x):
        return A @ x

    def to_tree(self, x):
        return np.asarray(x, dtype=float)

    def from_tree(self, x):
        return x

    def todense(self, A):
        return A

    def finalize(self, A):
        return A

    def nbytes(self, A):
        return int(A.nbytes)

    def stats(self, A):
        return None


class HArithmetic:
    """H-matrix blocks on one block cluster tree shared by every plane.

    Vectors are kept in cluster-tree order between ``to_tree`` and
    ``from_tree``. Diagonal plane blocks stay diagonal, so products with them
    are exact row and column scalings.
    """

    name = "hmatrix"

    def __init__(self, coords, eps, eta=2.0, leaf_size=32, admissibility="standard", max_leaf_bytes=DEFAULT_LEAF_BYTES_CAP):
        self.eps = float(eps)
        self.tree = build_cluster_tree(coords, leaf_size)
        self.structure = build_block_cluster_tree(self.tree, eta, admissibility)
        self.perm = self.tree.perm
        self.max_leaf_bytes = max_leaf_bytes

    def _is_diagonal(self, m):
        coo = m.tocoo()
        return bool(np.all(coo.row == coo.col))

    def block(self, pb):
        m = pb.matrix
        if self._is_diagonal(m):
            return Diagonal(m.diagonal()[self.perm])
        return compress_sparse(m, self.structure, self.eps, self.max_leaf_bytes)

    def stored(self, pb, op):
        """Solve-time form of an input block: exact sparse (tree order) unless diagonal."""
        if isinstance(op, Diagonal):
            return op
        return sp.csr_array(pb.matrix[self.perm][:, self.perm])

    def _h(self, A):
        if isinstance(A, Diagonal):
            return compress_sparse(sp.diags(A.d[self.tree.iperm]).tocsr(), self.structure, self.eps)
        return A

    def invert(self, A):
        if isinstance(A, Diagonal):
            if np.any(A.d == 0.0):
                raise SingularBlockError("zero on the diagonal of a diagonal pivot block")
            return Diagonal(1.0 / A.d)
        return hinvert(self._full(A), self.eps)

    @staticmethod
    def _full(A):
        return A.materialize() if isinstance(A, Scaled) else A

    def mul(self, A, B, alpha=1.0):
        a_diag, b_diag = isinstance(A, Diagonal), isinstance(B, Diagonal)
        if a_diag and b_diag:
            return Diagonal(alpha * A.d * B.d)
        if a_diag or b_diag:
            H, left, right = (B, alpha * A.d, None) if a_diag else (A, None, alpha * B.d)
            if not isinstance(H, Scaled):
                H = Scaled(H)
            return H.rescale(left, right)
        return hmultiply(self._full(A), self._full(B), self.eps, alpha)

    def muladd(self, C, A, B, alpha=1.0):
        C = self._full(C)
        if isinstance(A, Diagonal) or isinstance(B, Diagonal):
            P = self._full(self.mul(A, B, alpha))
            if isinstance(C, Diagonal) and isinstance(P, Diagonal):
                return Diagonal(C.d + P.d)
            return hadd(self._h(C), self._h(P), self.eps)
        return hmuladd(self._h(C), self._full(A), self._full(B), alpha, self.eps)

    def matvec(self, A, x):
        if isinstance(A, Diagonal):
            return A.d * x
        if isinstance(A, (HMatrix, Scaled)):
            return A.matvec(x) if isinstance(A, Scaled) else A.matvec_tree(x)
        return A @ x

    def to_tree(self, x):
        return np.asarray(x, dtype=float)[self.perm]

    def from_tree(self, x):
        out = np.empty_like(x)
        out[self.perm] = x
        return out

    def todense(self, A):
        if isinstance(A, Diagonal):
            return np.diag(A.d)
        if isinstance(A, (HMatrix, Scaled)):
            return self._full(A).to_dense()[np.ix_(self.perm, self.perm)]
        return A.toarray()

    def finalize(self, A):
        if isinstance(A, Scaled):
            A.H.freeze()
            return A
        return A.freeze() if isinstance(A, HMatrix) else A

    def nbytes(self, A):
        """Bytes owned by ``A``; a ``Scaled`` block owns only its diagonals."""
        if isinstance(A, HMatrix):
            return memory_footprint(A)
        if isinstance(A, (Diagonal, Scaled)):
            return A.nbytes
        return int(A.data.nbytes + A.indices.nbytes + A.indptr.nbytes)

    def stats(self, A):
        if isinstance(A, Scaled):
            A = A.H
        return rank_stats(A) if isinstance(A, HMatrix) else None


def make_arithmetic(config: AcrConfig, coords):
    if config.mode == "dense":
        return DenseArithmetic()
    return HArithmetic(coords, config.eps, config.eta, config.leaf_size, config.admissibility, config.max_leaf_bytes)


# ---------------------------------------------------------------------------
# per-plane kernels (shared with the parallel engine)


def level_origin(level, position):
    """Original plane index of ``position`` at elimination ``level``."""
    return (position + 1) * 2**level - 1


def invert_plane(arith, Dj, level, position):
    try:
        return arith.finalize(arith.invert(Dj))
    except SingularBlockError as err:
        raise err.located(level, level_origin(level, position)) from err


def reduce_plane(arith, Dj, Ej, Fj, F_prev, E_prev, dinv_prev, dinv_next=None, E_next=None, F_next=None):
    """New ``(D', E', F')`` of a kept plane from its own and its neighbours' blocks.

    ``E_prev`` / ``F_next`` (the far couplings of the neighbours) are ``None``
    when the neighbour sits on the boundary of the level, as is
    ``dinv_next`` when the kept plane is the last one.
    """
    X = arith.mul(Ej, dinv_prev)
    D_new = arith.muladd(Dj, X, F_prev, -1.0)
    E_new = arith.mul(X, E_prev, -1.0) if E_prev is not None else None
    F_new = None
    if dinv_next is not None:
        Y = arith.mul(Fj, dinv_next)
        D_new = arith.muladd(D_new, Y, E_next, -1.0)
        if F_next is not None:
            F_new = arith.mul(Y, F_next, -1.0)
    return D_new, E_new, F_new


def reduce_rhs(arith, fj, Ej, Fj, g_prev, g_next=None):
    """``f'_j`` from ``g = D^{-1} f`` of the eliminated neighbours."""
    r = fj - arith.matvec(Ej, g_prev)
    if g_next is not None:
        r = r - arith.matvec(Fj, g_next)
    return r


def back_substitute(arith, dinv, fj, Ej=None, u_prev=None, Fj=None, u_next=None):
    r = fj
    if Ej is not None:
        r = r - arith.matvec(Ej, u_prev)
    if Fj is not None:
        r = r - arith.matvec(Fj, u_next)
    return arith.matvec(dinv, r)


# ---------------------------------------------------------------------------
# factorization


@dataclass
class Level:
    """Blocks retained from one elimination step.

    ``E[k]`` couples position ``k + 1`` to ``k``; ``F[k]`` couples ``k`` to
    ``k + 1``; ``dinv[k]`` is the inverse at even position ``2 k``.
    """

    index: int
    n_planes: int
    E: list
    F: list
    dinv: list
    seconds: float = 0.0

    @property
    def origins(self):
        return [level_origin(self.index, k) for k in range(self.n_planes)]

    @property
    def eliminated(self):
        return list(range(0, self.n_planes, 2))

    def blocks(self):
        yield from self.dinv
        yield from self.E
        yield from self.F


@dataclass
class AcrFactorization:
    config: AcrConfig
    arith: object
    n_planes: int
    dim: int
    levels: list
    top: object  # inverse of the last plane, or a dense LU of the remaining system
    top_planes: int
    timings: dict = field(default_factory=dict)

    @property
    def mode(self):
        return self.config.mode

    @property
    def depth(self) -> int:
        return len(self.levels)

    def stored_blocks(self):
        for lev in self.levels:
            yield from lev.blocks()
        if self.top_planes == 1:
            yield self.top

    @property
    def factor_bytes(self) -> int:
        total = sum(self.arith.nbytes(b) for b in self.stored_blocks())
        if self.top_planes > 1:
            total += int(self.top[0].nbytes + self.top[1].nbytes)
        return total

    def rank_stats(self) -> RankStats:
        """Ranks over every stored H-matrix (inverses and off-diagonal blocks)."""
        stats = [s for s in (self.arith.stats(b) for b in self.stored_blocks()) if s is not None]
        return RankStats.combine(stats) if stats else RankStats(0.0, 0, 0, 0, 0)

    def inverse_rank_stats(self) -> RankStats:
        invs = [b for lev in self.levels for b in lev.dinv]
        if self.top_planes == 1:
            invs.append(self.top)
        stats = [s for s in (self.arith.stats(b) for b in invs) if s is not None]
        return RankStats.combine(stats) if stats else RankStats(0.0, 0, 0, 0, 0)

    def level_report(self):
        out = []
        for lev in self.levels:
            stats = [s for s in (self.arith.stats(b) for b in lev.blocks()) if s is not None]
            st = RankStats.combine(stats) if stats else None
            out.append(
                {
                    "level": lev.index,
                    "planes": lev.n_planes,
                    "inverses": len(lev.dinv),
                    "bytes": sum(self.arith.nbytes(b) for b in lev.blocks()),
                    "average_rank": st.average_rank if st else None,
                    "largest_rank": st.largest_rank if st else None,
                    "seconds": lev.seconds,
                }
            )
        return out

    def to_json(self) -> dict:
        """Factorization metadata as a JSON-ready report fragment."""
        st = self.rank_stats()
        return {
            "config": self.config.to_dict(),
            "n_planes": self.n_planes,
            "dim": self.dim,
            "depth": self.depth,
            "top_planes": self.top_planes,
            "factor_bytes": self.factor_bytes,
            "average_rank": st.average_rank,
            "largest_rank": st.largest_rank,
            "levels": self.level_report(),
            "timings": dict(self.timings),
        }

    def solve(self, f):
        return acr_solve(self, f)


def _level_blocks(arith, system):
    D = [arith.block(d) for d in system.D]
    E = [arith.block(e) for e in system.E]
    F = [arith.block(x) for x in system.F]
    return D, E, F


def schur_step(arith, D, E, F, level=0):
    """One elimination step on plane blocks ``D, E, F`` of a level.

    Returns ``(dinv, (D', E', F'))``: inverses at even positions and the
    blocks of the reduced system on the odd positions.
    """
    m = len(D)
    if m < 2:
        raise ValueError("a reduction step needs at least two planes")
    dinv = [invert_plane(arith, D[k], level, k) for k in range(0, m, 2)]
    D_new, E_new, F_new = [], [], []
    for j in range(1, m, 2):
        has_next = j + 1 < m
        d, e, f = reduce_plane(
            arith,
            D[j],
            E[j - 1],
            F[j] if has_next else None,
            F[j - 1],
            E[j - 2] if j >= 2 else None,
            dinv[(j - 1) // 2],
            dinv[(j + 1) // 2] if has_next else None,
            E[j] if has_next else None,
            F[j + 1] if j + 2 < m else None,
        )
        D_new.append(d)
        if e is not None:
            E_new.append(e)
        if f is not None:
            F_new.append(f)
    return dinv, (D_new, E_new, F_new)


def _factor_top(arith, D, E, F, level):
    """Inverse of a single remaining plane, or a dense LU of the remaining block system."""
    if len(D) == 1:
        return invert_plane(arith, D[0], level, 0)
    m, dim = len(D), _dim_of(arith, D[0])
    M = np.zeros((m * dim, m * dim))
    for j in range(m):
        M[j * dim:(j + 1) * dim, j * dim:(j + 1) * dim] = arith.todense(D[j])
        if j > 0:
            M[j * dim:(j + 1) * dim, (j - 1) * dim:j * dim] = arith.todense(E[j - 1])
        if j < m - 1:
            M[j * dim:(j + 1) * dim, (j + 1) * dim:(j + 2) * dim] = arith.todense(F[j])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu = scipy.linalg.lu_factor(M, check_finite=False)
    if not np.all(np.isfinite(lu[0])) or np.any(np.diag(lu[0]) == 0.0):
        raise SingularBlockError(f"remaining {m}-plane system is singular", level=level)
    return lu


def _dim_of(arith, A):
    if isinstance(A, Diagonal):
        return len(A.d)
    return A.shape[0]


def acr_factor(system: BlockTridiagonalSystem, config: AcrConfig | None = None) -> AcrFactorization:
    """Factor ``system`` by repeated Schur steps until ``config.stop_planes`` remain."""
    config = config or AcrConfig()
    t0 = time.perf_counter()
    arith = make_arithmetic(config, system.coords)
    D, E, F = _level_blocks(arith, system)
    # solve-time forms of the input couplings (exact sparse, or diagonals)
    E_keep = [arith.stored(pb, op) for pb, op in zip(system.E, E)]
    F_keep = [arith.stored(pb, op) for pb, op in zip(system.F, F)]
    t_setup = time.perf_counter() - t0
    levels = []
    i = 0
    while len(D) > config.stop_planes:
        ts = time.perf_counter()
        dinv, (D_next, E_next, F_next) = schur_step(arith, D, E, F, level=i)
        if i > 0:
            E_keep = [arith.finalize(e) for e in E]
            F_keep = [arith.finalize(x) for x in F]
        levels.append(Level(i, len(D), E_keep, F_keep, dinv, time.perf_counter() - ts))
        logger.info("level %d: %d planes in %.1fs", i, len(D), levels[-1].seconds)
        D, E, F = D_next, E_next, F_next
        i += 1
    ts = time.perf_counter()
    top = _factor_top(arith, D, E, F, i)
    t_top = time.perf_counter() - ts
    top_planes = len(D)
    fact = AcrFactorization(config, arith, system.n_planes, system.dim, levels, top, top_planes)
    fact.timings = {"setup": t_setup, "top": t_top, "factor": time.perf_counter() - t0}
    return fact


def acr_solve(fact: AcrFactorization, f) -> list:
    """Solve with a stored factorization; ``f`` is a list of plane vectors."""
    arith = fact.arith
    fs = [arith.to_tree(v) for v in as_planes(f, fact.n_planes, fact.dim)]
    saved = []
    for lev in fact.levels:
        m = lev.n_planes
        g = [arith.matvec(lev.dinv[k // 2], fs[k]) for k in range(0, m, 2)]
        nxt = []
        for j in range(1, m, 2):
            has_next = j + 1 < m
            nxt.append(
                reduce_rhs(
                    arith,
                    fs[j],
                    lev.E[j - 1],
                    lev.F[j] if has_next else None,
                    g[(j - 1) // 2],
                    g[(j + 1) // 2] if has_next else None,
                )
            )
        saved.append(fs)
        fs = nxt
    u = _solve_top(fact, fs)
    for lev, fs in zip(reversed(fact.levels), reversed(saved)):
        m = lev.n_planes
        full = [None] * m
        full[1::2] = u
        for j in range(0, m, 2):
            full[j] = back_substitute(
                arith,
                lev.dinv[j // 2],
                fs[j],
                lev.E[j - 1] if j > 0 else None,
                full[j - 1] if j > 0 else None,
                lev.F[j] if j + 1 < m else None,
                full[j + 1] if j + 1 < m else None,
            )
        u = full
    return [arith.from_tree(v) for v in u]


def _solve_top(fact, fs):
    arith = fact.arith
    if fact.top_planes == 1:
        return [arith.matvec(fact.top, fs[0])]
    x = scipy.linalg.lu_solve(fact.top, np.concatenate(fs), check_finite=False)
    return list(x.reshape(fact.top_planes, -1))


# ---------------------------------------------------------------------------
# dense cyclic reduction baseline


def cr_dense_factor(system: BlockTridiagonalSystem, stop_planes=1) -> AcrFactorization:
    """Classic block cyclic reduction with dense blocks (same code path as dense ACR)."""
    return acr_factor(system, AcrConfig(mode="dense", stop_planes=stop_planes))


def cr_dense_solve(fact: AcrFactorization, f) -> list:
    return acr_solve(fact, f)


def level_sizes(n_planes, stop_planes=1):
    """Plane counts of the levels that get reduced, followed by the remaining count."""
    sizes = []
    m = n_planes
    while m > stop_planes:
        sizes.append(m)
        m //= 2
    return sizes, m


def dense_cr_bytes(n_planes, dim, stop_planes=1) -> int:
    """Bytes stored by dense cyclic reduction, counted block by block.

    Every reduced level keeps ``ceil(m / 2)`` inverses and ``m - 1`` blocks
    each of ``E`` and ``F``; the remainder keeps one inverse or a dense LU.
    """
    block = 8 * dim * dim
    sizes, rest = level_sizes(n_planes, stop_planes)
    total = sum(((m + 1) // 2 + 2 * (m - 1)) * block for m in sizes)
    if rest == 1:
        total += block
    else:
        total += 8 * (rest * dim) ** 2 + 4 * rest * dim
    return total
