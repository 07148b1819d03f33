"""H-matrices over a block cluster tree and their truncated arithmetic.

All blocks are stored in cluster-tree order; ``HMatrix.matvec`` and
``HMatrix.to_dense`` translate to and from the original index order. Every
operation returns a fresh H-matrix; intermediate accumulation mutates only
nodes created inside the operation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ..errors import DimensionMismatchError, MemoryCapError, SingularBlockError, StructureMismatchError
from .cluster import DENSE, LOWRANK, SUB, BlockClusterTree, BlockNode
from .lowrank import add_factored, compress_dense, sum_factored, truncate

DEFAULT_LEAF_BYTES_CAP = 256 * 2**20
CONDITION_CAP = 1e15
# products whose target has at most this many entries are formed densely
DENSE_TARGET_ENTRIES = 64 * 64


class HNode:
    __slots__ = ("block", "kind", "data", "U", "V", "children", "pending")

    def __init__(self, block, data=None, U=None, V=None, children=None):
        self.block = block
        self.kind = block.kind
        self.data = data
        self.U = U
        self.V = V
        self.children = children
        self.pending = None

    @property
    def rank(self):
        return self.U.shape[1] if self.kind is LOWRANK else None

    def __repr__(self):
        b = self.block
        return f"HNode({self.kind}, {b.rows.start}:{b.rows.stop} x {b.cols.start}:{b.cols.stop})"


def _leaf_nodes(node):
    out, stack = [], [node]
    while stack:
        x = stack.pop()
        if x.kind is SUB:
            for row in reversed(x.children):
                stack.extend(reversed(row))
        else:
            out.append(x)
    return out


@dataclass(frozen=True)
class RankStats:
    average_rank: float
    largest_rank: int
    dense_leaf_count: int
    lowrank_leaf_count: int
    bytes: int

    @staticmethod
    def combine(stats):
        stats = list(stats)
        n_lr = sum(s.lowrank_leaf_count for s in stats)
        total = sum(s.average_rank * s.lowrank_leaf_count for s in stats)
        return RankStats(
            average_rank=total / n_lr if n_lr else 0.0,
            largest_rank=max((s.largest_rank for s in stats), default=0),
            dense_leaf_count=sum(s.dense_leaf_count for s in stats),
            lowrank_leaf_count=n_lr,
            bytes=sum(s.bytes for s in stats),
        )


class HMatrix:
    """Square H-matrix on a block cluster tree.

    Low-rank leaves hold ``U @ V.T``; dense leaves hold the full sub-block.
    ``eps`` records the relative truncation tolerance the matrix was built with.
    """

    def __init__(self, root: HNode, structure: BlockClusterTree, eps: float):
        self.root = root
        self.structure = structure
        self.eps = float(eps)
        self._leaves = None
        self._packed = None

    @property
    def tree(self):
        return self.structure.tree

    @property
    def shape(self):
        n = self.tree.size
        return n, n

    @property
    def dim(self):
        return self.tree.size

    def leaves(self):
        if self._leaves is None:
            self._leaves = _leaf_nodes(self.root)
        return self._leaves

    def matvec(self, x):
        return hmatvec(self, x)

    def __matmul__(self, x):
        return hmatvec(self, x)

    def to_dense(self) -> np.ndarray:
        """Dense matrix in the original index order."""
        perm = self.tree.perm
        out = np.empty(self.shape)
        out[np.ix_(perm, perm)] = _to_dense(self.root)
        return out

    def rank_stats(self) -> RankStats:
        return rank_stats(self)

    def freeze(self) -> "HMatrix":
        """Pack the leaves into sparse operators for fast repeated matvecs.

        Leaf arrays are replaced by read-only views into the packed storage, so
        freezing does not duplicate the dense-leaf or factor data. Frozen
        matrices remain valid operands for all arithmetic.
        """
        if self._packed is None:
            self._packed = _pack(self.leaves(), self.dim)
        return self

    def matvec_tree(self, xp):
        """``H @ x`` with ``x`` and the result in cluster-tree order."""
        if self._packed is not None:
            dense, ut, vt = self._packed
            y = dense @ xp
            if vt is not None:
                y += ut @ (vt @ xp)
            return y
        yp = np.zeros(xp.shape)
        for leaf in self.leaves():
            r, c = leaf.block.rows, leaf.block.cols
            if leaf.kind is DENSE:
                yp[r.start:r.stop] += leaf.data @ xp[c.start:c.stop]
            elif leaf.U.shape[1]:
                yp[r.start:r.stop] += leaf.U @ (leaf.V.T @ xp[c.start:c.stop])
        return yp

    @property
    def nbytes(self) -> int:
        return memory_footprint(self)

    def __repr__(self):
        s = rank_stats(self)
        return f"HMatrix(dim={self.dim}, eps={self.eps:g}, largest_rank={s.largest_rank}, bytes={s.bytes})"


# ---------------------------------------------------------------------------
# construction


def _zeros(block: BlockNode) -> HNode:
    m, n = block.shape
    if block.kind is DENSE:
        return HNode(block, data=np.zeros((m, n)))
    if block.kind is LOWRANK:
        return HNode(block, U=np.zeros((m, 0)), V=np.zeros((n, 0)))
    return HNode(block, children=[[_zeros(b) for b in row] for row in block.children])


def zeros(structure: BlockClusterTree, eps=0.0) -> HMatrix:
    return HMatrix(_zeros(structure.root), structure, eps)


def identity(structure: BlockClusterTree, eps=0.0) -> HMatrix:
    n = structure.tree.size
    return compress_sparse(sp.identity(n, format="csr"), structure, eps)


def _permuted(A, perm):
    A = sp.csr_array(A)
    return A[perm][:, perm].tocsr()


def compress_sparse(block, structure: BlockClusterTree, eps, max_leaf_bytes=DEFAULT_LEAF_BYTES_CAP) -> HMatrix:
    """Compress a sparse plane block (``PlaneBlock`` or sparse matrix).

    Dense leaves are copied exactly. Admissible leaves are truncated with a
    relative SVD criterion applied to their nonzero rows and columns only.
    """
    A = getattr(block, "matrix", block)
    n = structure.tree.size
    if A.shape != (n, n):
        raise DimensionMismatchError(f"block has shape {A.shape}, cluster tree has {n} indices")
    Ap = _permuted(A, structure.tree.perm)

    def build(b: BlockNode):
        if b.kind is SUB:
            return HNode(b, children=[[build(c) for c in row] for row in b.children])
        r, c = b.rows, b.cols
        sub = Ap[r.start:r.stop, c.start:c.stop]
        m, k = b.shape
        if b.kind is LOWRANK and sub.nnz == 0:
            return HNode(b, U=np.zeros((m, 0)), V=np.zeros((k, 0)))
        if b.kind is LOWRANK:
            # only the nonzero rows and columns need an SVD
            coo = sub.tocoo()
            ri, ci = np.unique(coo.row), np.unique(coo.col)
            if 8 * len(ri) * len(ci) > max_leaf_bytes:
                raise MemoryCapError(f"leaf {r.start}:{r.stop} x {c.start}:{c.stop} needs {8 * len(ri) * len(ci)} bytes")
            Us, Vs = compress_dense(sub[ri][:, ci].toarray(), eps)
            U, V = np.zeros((m, Us.shape[1])), np.zeros((k, Vs.shape[1]))
            U[ri], V[ci] = Us, Vs
            return HNode(b, U=U, V=V)
        if 8 * m * k > max_leaf_bytes:
            raise MemoryCapError(f"leaf {r.start}:{r.stop} x {c.start}:{c.stop} needs {8 * m * k} bytes")
        return HNode(b, data=sub.toarray())

    return HMatrix(build(structure.root), structure, eps)


def from_dense(M, structure: BlockClusterTree, eps) -> HMatrix:
    """Compress a dense matrix given in original index order."""
    M = np.asarray(M, dtype=float)
    n = structure.tree.size
    if M.shape != (n, n):
        raise DimensionMismatchError(f"matrix has shape {M.shape}, cluster tree has {n} indices")
    perm = structure.tree.perm
    Mp = M[np.ix_(perm, perm)]

    def build(b):
        if b.kind is SUB:
            return HNode(b, children=[[build(c) for c in row] for row in b.children])
        sub = Mp[b.rows.start:b.rows.stop, b.cols.start:b.cols.stop]
        if b.kind is DENSE:
            return HNode(b, data=sub.copy())
        U, V = compress_dense(sub, eps)
        return HNode(b, U=U, V=V)

    return HMatrix(build(structure.root), structure, eps)


# ---------------------------------------------------------------------------
# node-level kernels


def _pairs(node):
    """``(child, (r0, r1, c0, c1))`` for every child of a SUB node."""
    for row, offs in zip(node.children, node.block.offsets):
        yield from zip(row, offs)


def _to_dense(node) -> np.ndarray:
    if node.kind is DENSE:
        return node.data.copy()
    if node.kind is LOWRANK:
        return node.U @ node.V.T
    out = np.empty((node.block.m, node.block.n))
    for ch, (r0, r1, c0, c1) in _pairs(node):
        out[r0:r1, c0:c1] = _to_dense(ch)
    return out


def _matmat(node, X):
    """``node @ X`` for a block of rows ``X`` matching the node's columns."""
    kind = node.kind
    if kind is DENSE:
        return node.data @ X
    if kind is LOWRANK:
        if node.U.shape[1] == 0:
            return np.zeros((node.block.m, X.shape[1]))
        return node.U @ (node.V.T @ X)
    Y = np.zeros((node.block.m, X.shape[1]))
    for ch, (r0, r1, c0, c1) in _pairs(node):
        if ch.kind is LOWRANK and ch.U.shape[1] == 0:
            continue
        Y[r0:r1] += _matmat(ch, X[c0:c1])
    return Y


def _matmat_t(node, X):
    """``node.T @ X``."""
    kind = node.kind
    if kind is DENSE:
        return node.data.T @ X
    if kind is LOWRANK:
        if node.U.shape[1] == 0:
            return np.zeros((node.block.n, X.shape[1]))
        return node.V @ (node.U.T @ X)
    Y = np.zeros((node.block.n, X.shape[1]))
    for ch, (r0, r1, c0, c1) in _pairs(node):
        if ch.kind is LOWRANK and ch.U.shape[1] == 0:
            continue
        Y[c0:c1] += _matmat_t(ch, X[r0:r1])
    return Y


def _copy(node) -> HNode:
    if node.kind is SUB:
        return HNode(node.block, children=[[_copy(c) for c in row] for row in node.children])
    return HNode(node.block, data=node.data, U=node.U, V=node.V)


def _add_lowrank(C, U, V, eps):
    """``C += U @ V.T`` with truncation in every low-rank leaf touched."""
    if U.shape[1] == 0:
        return
    if C.kind is DENSE:
        C.data = C.data + U @ V.T
    elif C.kind is LOWRANK:
        _defer(C, U, V)
    else:
        for ch, (r0, r1, c0, c1) in _pairs(C):
            _add_lowrank(ch, U[r0:r1], V[c0:c1], eps)


def _add_node(C, B, alpha, eps):
    """Leafwise ``C += alpha * B`` on identical structure."""
    if C.kind is SUB:
        for crow, brow in zip(C.children, B.children):
            for c, b in zip(crow, brow):
                _add_node(c, b, alpha, eps)
    elif C.kind is DENSE:
        C.data = C.data + alpha * B.data
    elif B.U.shape[1]:
        C.U, C.V = add_factored(C.U, C.V, alpha * B.U, B.V, eps)


def _scale(node, alpha) -> HNode:
    if node.kind is SUB:
        return HNode(node.block, children=[[_scale(c, alpha) for c in row] for row in node.children])
    if node.kind is DENSE:
        return HNode(node.block, data=alpha * node.data)
    return HNode(node.block, U=alpha * node.U, V=node.V)


def _diag_scale(node, left, right) -> HNode:
    """``diag(left) @ node @ diag(right)``; either side may be ``None``."""
    if node.kind is SUB:
        out = []
        for row, offs in zip(node.children, node.block.offsets):
            out.append(
                [
                    _diag_scale(ch, None if left is None else left[r0:r1], None if right is None else right[c0:c1])
                    for ch, (r0, r1, c0, c1) in zip(row, offs)
                ]
            )
        return HNode(node.block, children=out)
    if node.kind is DENSE:
        data = node.data
        if left is not None:
            data = left[:, None] * data
        if right is not None:
            data = data * right[None, :]
        return HNode(node.block, data=data)
    U = node.U if left is None else left[:, None] * node.U
    V = node.V if right is None else right[:, None] * node.V
    return HNode(node.block, U=U, V=V)


def _exact_lowrank_product(A, B):
    """Factors of ``A @ B`` when at least one operand is a low-rank leaf."""
    if A.kind is LOWRANK and (B.kind is not LOWRANK or A.U.shape[1] <= B.U.shape[1]):
        if A.U.shape[1] == 0:
            return A.U, np.zeros((B.block.n, 0))
        return A.U, _matmat_t(B, A.V)
    if B.U.shape[1] == 0:
        return np.zeros((A.block.m, 0)), B.V
    return _matmat(A, B.U), B.V


def _dense_product(A, B):
    if A.kind is DENSE:
        return _matmat_t(B, A.data.T).T
    if B.kind is DENSE:
        return _matmat(A, B.data)
    return _matmat(A, _to_dense(B))


def _truncated_product(A, B, eps):
    """Truncated factors of ``A @ B`` for a low-rank target; neither operand is low-rank.

    Small targets are formed densely and compressed once; larger ones recurse
    and agglomerate the children's factors.
    """
    m, n = A.block.m, B.block.n
    if A.kind is DENSE or B.kind is DENSE or m * n <= DENSE_TARGET_ENTRIES:
        return compress_dense(_dense_product(A, B), eps)
    r_base, c_base = A.block.rows.start, B.block.cols.start
    Us, Vs = [], []
    for i, arow in enumerate(A.children):
        for j in range(len(B.children[0])):
            terms_u, terms_v = [], []
            for k, a in enumerate(arow):
                b = B.children[k][j]
                if a.kind is LOWRANK or b.kind is LOWRANK:
                    U, V = _exact_lowrank_product(a, b)
                else:
                    U, V = _truncated_product(a, b, eps)
                if U.shape[1]:
                    terms_u.append(U)
                    terms_v.append(V)
            if not terms_u:
                continue
            U, V = truncate(np.hstack(terms_u), np.hstack(terms_v), eps)
            if U.shape[1] == 0:
                continue
            rows = arow[0].block.rows
            cols = B.children[0][j].block.cols
            Ub = np.zeros((m, U.shape[1]))
            Vb = np.zeros((n, V.shape[1]))
            Ub[rows.start - r_base:rows.stop - r_base] = U
            Vb[cols.start - c_base:cols.stop - c_base] = V
            Us.append(Ub)
            Vs.append(Vb)
    if not Us:
        return np.zeros((m, 0)), np.zeros((n, 0))
    return truncate(np.hstack(Us), np.hstack(Vs), eps)


def _mul_add(A, B, C, alpha, eps):
    """``C += alpha * A @ B``; ``C`` must consist of nodes owned by the caller."""
    if A.kind is LOWRANK or B.kind is LOWRANK:
        U, V = _exact_lowrank_product(A, B)
        if U.shape[1]:
            _add_lowrank(C, alpha * U, V, eps)
        return
    if C.kind is SUB:
        a_grid = A.children if A.kind is SUB else [[A]]
        b_grid = B.children if B.kind is SUB else [[B]]
        inner = len(b_grid)
        for i, crow in enumerate(C.children):
            for j, c in enumerate(crow):
                for k in range(inner):
                    _mul_add(a_grid[i][k], b_grid[k][j], c, alpha, eps)
        return
    if C.kind is DENSE:
        C.data = C.data + alpha * _dense_product(A, B)
        return
    U, V = _truncated_product(A, B, eps)
    if U.shape[1]:
        _defer(C, alpha * U, V)


def _defer(C, U, V):
    if C.pending is None:
        C.pending = [(C.U, C.V)]
    C.pending.append((U, V))


def _flush(node, eps):
    """Truncate every low-rank leaf that collected updates, once per leaf."""
    if node.kind is SUB:
        for row in node.children:
            for ch in row:
                _flush(ch, eps)
    elif node.pending is not None:
        node.U, node.V = sum_factored(node.pending, eps)
        node.pending = None


def _mul_add_flush(A, B, C, alpha, eps):
    _mul_add(A, B, C, alpha, eps)
    _flush(C, eps)


def _dense_inverse(M, cluster):
    """Inverse of a dense leaf through partially pivoted LU."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    if not np.all(np.isfinite(lu)) or np.any(np.diag(lu) == 0.0):
        raise SingularBlockError(f"exactly singular pivot in cluster {cluster}", cluster=cluster)
    inv = scipy.linalg.lu_solve((lu, piv), np.eye(M.shape[0]), check_finite=False)
    cond = np.linalg.norm(M, 1) * np.linalg.norm(inv, 1)
    if not np.isfinite(cond) or cond > CONDITION_CAP:
        raise SingularBlockError(
            f"pivot block of cluster {cluster} has condition estimate {cond:.3e}", cluster=cluster
        )
    return inv


def _inverse(A, eps) -> HNode:
    """Recursive 2x2 block inversion through the Schur complement of ``A11``."""
    b = A.block
    if A.kind is DENSE:
        return HNode(b, data=_dense_inverse(A.data, (b.rows.start, b.rows.stop)))
    if A.kind is LOWRANK or len(A.children) != 2 or len(A.children[0]) != 2:
        raise StructureMismatchError(f"diagonal block {A} cannot be inverted recursively")
    (A11, A12), (A21, A22) = A.children
    X11 = _inverse(A11, eps)
    T12 = _zeros(A12.block)
    _mul_add_flush(X11, A12, T12, 1.0, eps)
    T21 = _zeros(A21.block)
    _mul_add_flush(A21, X11, T21, 1.0, eps)
    S = _copy(A22)
    _mul_add_flush(A21, T12, S, -1.0, eps)
    X22 = _inverse(S, eps)
    X12 = _zeros(A12.block)
    _mul_add_flush(T12, X22, X12, -1.0, eps)
    X21 = _zeros(A21.block)
    _mul_add_flush(X22, T21, X21, -1.0, eps)
    _mul_add_flush(X12, T21, X11, -1.0, eps)
    return HNode(b, children=[[X11, X12], [X21, X22]])


def _pack(leaves, n):
    """Sparse operators ``(dense, Ut, Vt)`` with ``H = dense + Ut @ Vt``; rebinds leaf arrays as views."""
    dense = [l for l in leaves if l.kind is DENSE]
    lowrank = [l for l in leaves if l.kind is LOWRANK and l.U.shape[1]]
    shapes = {l.block.shape for l in dense}
    bs = next(iter(shapes))[0] if len(shapes) == 1 else 0
    aligned = bs and all(
        l.block.shape == (bs, bs) and l.block.rows.start % bs == 0 and l.block.cols.start % bs == 0 for l in dense
    ) and n % bs == 0
    if aligned:
        dense.sort(key=lambda l: (l.block.rows.start, l.block.cols.start))
        data = np.stack([l.data for l in dense])
        brow = np.array([l.block.rows.start // bs for l in dense])
        indptr = np.searchsorted(brow, np.arange(n // bs + 1))
        indices = np.array([l.block.cols.start // bs for l in dense], dtype=np.int32)
        D = sp.bsr_array((data, indices, indptr), shape=(n, n), blocksize=(bs, bs))
        data.setflags(write=False)
        for i, l in enumerate(dense):
            l.data = data[i]
    else:
        rows, cols, vals = [], [], []
        for l in dense:
            r, c = l.block.rows, l.block.cols
            rr, cc = np.meshgrid(np.arange(r.start, r.stop), np.arange(c.start, c.stop), indexing="ij")
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            vals.append(l.data.ravel())
        D = sp.csr_array(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ) if dense else sp.csr_array((n, n))
    if not lowrank:
        return D, None, None
    ks = [l.U.shape[1] for l in lowrank]
    K = sum(ks)
    vdata = np.concatenate([l.V.T.ravel() for l in lowrank])
    udata = np.concatenate([l.U.T.ravel() for l in lowrank])
    vind = np.concatenate([np.tile(np.arange(l.block.cols.start, l.block.cols.stop), k) for l, k in zip(lowrank, ks)])
    uind = np.concatenate([np.tile(np.arange(l.block.rows.start, l.block.rows.stop), k) for l, k in zip(lowrank, ks)])
    vlen = np.repeat([l.block.cols.size for l in lowrank], ks)
    ulen = np.repeat([l.block.rows.size for l in lowrank], ks)
    vptr = np.concatenate([[0], np.cumsum(vlen)])
    uptr = np.concatenate([[0], np.cumsum(ulen)])
    Vt = sp.csr_array((vdata, vind, vptr), shape=(K, n))
    Ut = sp.csc_array((udata, uind, uptr), shape=(n, K))
    vdata, udata = Vt.data, Ut.data
    vdata.setflags(write=False)
    udata.setflags(write=False)
    vo = uo = 0
    for l, k in zip(lowrank, ks):
        nc, nr = l.block.cols.size, l.block.rows.size
        l.V = vdata[vo:vo + k * nc].reshape(k, nc).T
        l.U = udata[uo:uo + k * nr].reshape(k, nr).T
        vo += k * nc
        uo += k * nr
    return D, Ut, Vt


# ---------------------------------------------------------------------------
# public arithmetic


def _check_same(A: HMatrix, B: HMatrix):
    if A.structure is not B.structure:
        raise StructureMismatchError("operands use different block cluster trees")


def hmatvec(H: HMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = H.dim
    if x.shape[0] != n:
        raise DimensionMismatchError(f"vector has length {x.shape[0]}, H-matrix has dim {n}")
    perm = H.tree.perm
    yp = H.matvec_tree(x[perm])
    y = np.empty_like(yp)
    y[perm] = yp
    return y


def hadd(A: HMatrix, B: HMatrix, eps=None) -> HMatrix:
    _check_same(A, B)
    eps = max(A.eps, B.eps) if eps is None else eps
    C = _copy(A.root)
    _add_node(C, B.root, 1.0, eps)
    return HMatrix(C, A.structure, eps)


def hsub(A: HMatrix, B: HMatrix, eps=None) -> HMatrix:
    _check_same(A, B)
    eps = max(A.eps, B.eps) if eps is None else eps
    C = _copy(A.root)
    _add_node(C, B.root, -1.0, eps)
    return HMatrix(C, A.structure, eps)


def hscale(A: HMatrix, alpha) -> HMatrix:
    return HMatrix(_scale(A.root, float(alpha)), A.structure, A.eps)


def hdiagscale(H: HMatrix, left=None, right=None, tree_order=False) -> HMatrix:
    """Exact ``diag(left) @ H @ diag(right)``; vectors in original order unless ``tree_order``."""
    perm = H.tree.perm

    def prep(d):
        if d is None:
            return None
        d = np.asarray(d, dtype=float)
        if d.shape != (H.dim,):
            raise DimensionMismatchError(f"diagonal has shape {d.shape}, H-matrix has dim {H.dim}")
        return d if tree_order else d[perm]

    return HMatrix(_diag_scale(H.root, prep(left), prep(right)), H.structure, H.eps)


def hmultiply(A: HMatrix, B: HMatrix, eps=None, alpha=1.0) -> HMatrix:
    """Truncated product ``alpha * A @ B`` on the shared block structure."""
    _check_same(A, B)
    eps = max(A.eps, B.eps) if eps is None else eps
    C = _zeros(A.structure.root)
    _mul_add_flush(A.root, B.root, C, float(alpha), eps)
    return HMatrix(C, A.structure, eps)


def hmuladd(C: HMatrix, A: HMatrix, B: HMatrix, alpha=1.0, eps=None) -> HMatrix:
    """``C + alpha * A @ B`` as a new H-matrix (``C`` is left untouched)."""
    _check_same(A, B)
    _check_same(A, C)
    eps = max(A.eps, B.eps, C.eps) if eps is None else eps
    out = _copy(C.root)
    _mul_add_flush(A.root, B.root, out, float(alpha), eps)
    return HMatrix(out, C.structure, eps)


def hinvert(H: HMatrix, eps=None) -> HMatrix:
    eps = H.eps if eps is None else eps
    return HMatrix(_inverse(H.root, eps), H.structure, eps)


def rank_stats(H: HMatrix) -> RankStats:
    ranks, dense = [], 0
    for leaf in H.leaves():
        if leaf.kind is DENSE:
            dense += 1
        else:
            ranks.append(leaf.U.shape[1])
    return RankStats(
        average_rank=float(np.mean(ranks)) if ranks else 0.0,
        largest_rank=int(max(ranks, default=0)),
        dense_leaf_count=dense,
        lowrank_leaf_count=len(ranks),
        bytes=memory_footprint(H),
    )


def memory_footprint(H: HMatrix) -> int:
    """Bytes of leaf data: ``8 m n`` per dense leaf, ``8 (m + n) k`` per low-rank leaf."""
    total = 0
    for leaf in H.leaves():
        m, n = leaf.block.shape
        if leaf.kind is DENSE:
            total += 8 * m * n
        else:
            total += 8 * (m + n) * leaf.U.shape[1]
    return total


def structure_json(H: HMatrix) -> dict:
    """Nested ``{rows, cols, kind, rank, children}`` description of the block layout."""

    def walk(node):
        b = node.block
        out = {"rows": [b.rows.start, b.rows.stop], "cols": [b.cols.start, b.cols.stop], "kind": node.kind}
        if node.kind is DENSE:
            out["rank"] = min(b.shape)
        elif node.kind is LOWRANK:
            out["rank"] = node.U.shape[1]
        else:
            out["children"] = [walk(c) for row in node.children for c in row]
        return out

    return walk(H.root)
