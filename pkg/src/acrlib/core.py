"""Block tridiagonal systems stored plane by plane.

A system of ``n`` planes with ``n**2`` unknowns each is kept as three lists of
sparse plane blocks (diagonal ``D``, sub-diagonal ``E``, super-diagonal ``F``)
and a list of right-hand side plane vectors. Row ``j`` of the operator reads::

    E_j u_{j-1} + D_j u_j + F_j u_{j+1}

with ``E`` stored so that ``E[j - 1]`` is the coupling of plane ``j`` to plane
``j - 1`` and ``F[j]`` the coupling of plane ``j`` to plane ``j + 1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import DimensionMismatchError, ZeroRightHandSideError


@dataclass(frozen=True)
class GridSpec:
    """Uniform interior grid of the unit cube with ``n`` points per axis."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs n >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def n_planes(self) -> int:
        return self.n

    @property
    def plane_size(self) -> int:
        return self.n * self.n

    def axis(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    def plane_coords(self) -> np.ndarray:
        """(x, y) of every node of a plane, x running fastest."""
        x = self.axis()
        xx, yy = np.meshgrid(x, x, indexing="xy")
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True, eq=False)
class PlaneBlock:
    """One ``dim x dim`` block of the global operator, in canonical sparse form.

    Duplicate coordinate entries are summed, stored zeros dropped and indices
    sorted on construction.
    ``coords`` holds the 2D position of each plane node and drives clustering.
    """

    matrix: sp.csr_array
    coords: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if not isinstance(m, sp.csr_array):
            m = sp.csr_array(m)
        else:
            m = m.copy()
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)
        coords = np.asarray(self.coords, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"plane block must be square, got {m.shape}")
        if coords.shape != (m.shape[0], 2):
            raise ValueError(f"coords must have shape ({m.shape[0]}, 2), got {coords.shape}")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_coo(cls, rows, cols, values, dim, coords):
        m = sp.coo_array((values, (rows, cols)), shape=(dim, dim))
        return cls(m.tocsr(), coords)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def entries(self):
        """Sorted ``(row, col, value)`` triples."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, x):
        return self.matrix @ x


@dataclass(frozen=True, eq=False)
class BlockTridiagonalSystem:
    D: tuple
    E: tuple
    F: tuple
    f: tuple = field(default=())

    def __post_init__(self):
        D, E, F = tuple(self.D), tuple(self.E), tuple(self.F)
        n = len(D)
        if n < 1:
            raise ValueError("system needs at least one plane")
        if len(E) != n - 1 or len(F) != n - 1:
            raise ValueError(f"expected {n - 1} off-diagonal blocks, got |E|={len(E)}, |F|={len(F)}")
        dim = D[0].dim
        for name, blocks, offset in (("D", D, 0), ("E", E, 1), ("F", F, 0)):
            for k, b in enumerate(blocks):
                if b.dim != dim:
                    raise DimensionMismatchError(
                        f"{name} block of plane {k + offset} has dim {b.dim}, expected {dim}",
                        plane=k + offset,
                    )
        f = tuple(np.asarray(v, dtype=float) for v in self.f) if len(self.f) else tuple(
            np.zeros(dim) for _ in range(n)
        )
        _check_planes(f, n, dim)
        for v in f:
            v.setflags(write=False)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "f", f)

    @property
    def n_planes(self) -> int:
        return len(self.D)

    @property
    def dim(self) -> int:
        return self.D[0].dim

    @property
    def coords(self) -> np.ndarray:
        return self.D[0].coords

    @property
    def N(self) -> int:
        return self.n_planes * self.dim

    def lower(self, j):
        """Block coupling plane ``j`` to ``j - 1`` (None on the first plane)."""
        return self.E[j - 1] if j > 0 else None

    def upper(self, j):
        """Block coupling plane ``j`` to ``j + 1`` (None on the last plane)."""
        return self.F[j] if j < self.n_planes - 1 else None

    def with_rhs(self, f) -> "BlockTridiagonalSystem":
        return BlockTridiagonalSystem(self.D, self.E, self.F, as_planes(f, self.n_planes, self.dim))

    def tosparse(self) -> sp.csr_array:
        """Assemble the full ``N x N`` operator (for oracles and small problems)."""
        n = self.n_planes
        grid = [[None] * n for _ in range(n)]
        for j in range(n):
            grid[j][j] = self.D[j].matrix
            if j > 0:
                grid[j][j - 1] = self.E[j - 1].matrix
            if j < n - 1:
                grid[j][j + 1] = self.F[j].matrix
        return sp.csr_array(sp.block_array(grid, format="csr"))

    def transpose(self) -> "BlockTridiagonalSystem":
        """The system of the transposed operator (same right-hand side)."""
        tr = lambda b: PlaneBlock(sp.csr_array(b.matrix.T), b.coords)
        return BlockTridiagonalSystem(
            tuple(tr(d) for d in self.D),
            tuple(tr(f) for f in self.F),
            tuple(tr(e) for e in self.E),
            self.f,
        )

    def is_symmetric(self, tol=0.0) -> bool:
        for d in self.D:
            if abs(d.matrix - d.matrix.T).max() > tol:
                return False
        for e, f in zip(self.E, self.F):
            if abs(e.matrix - f.matrix.T).max() > tol:
                return False
        return True


def _check_planes(u, n, dim):
    if len(u) != n:
        raise DimensionMismatchError(f"expected {n} plane vectors, got {len(u)}")
    for j, v in enumerate(u):
        if v.shape != (dim,):
            raise DimensionMismatchError(
                f"plane {j} has shape {v.shape}, expected ({dim},)", plane=j
            )


def as_planes(u, n_planes, dim) -> list:
    """Normalise a list of plane vectors or an ``(n, dim)`` array to a list of arrays."""
    if isinstance(u, np.ndarray) and u.ndim == 2:
        planes = [np.asarray(row, dtype=float) for row in u]
    elif isinstance(u, np.ndarray) and u.ndim == 1:
        raise DimensionMismatchError("plane vectors must be given per plane, not flattened")
    else:
        planes = [np.asarray(v, dtype=float) for v in u]
    _check_planes(planes, n_planes, dim)
    return planes


def flatten(u) -> np.ndarray:
    return np.concatenate([np.asarray(v) for v in u])


def unflatten(x, n_planes) -> list:
    return list(np.asarray(x).reshape(n_planes, -1))


def apply(system: BlockTridiagonalSystem, u) -> list:
    """Exact action of the global operator on plane vectors."""
    n = system.n_planes
    u = as_planes(u, n, system.dim)
    out = []
    for j in range(n):
        r = system.D[j].matrix @ u[j]
        if j > 0:
            r = r + system.E[j - 1].matrix @ u[j - 1]
        if j < n - 1:
            r = r + system.F[j].matrix @ u[j + 1]
        out.append(r)
    return out


def relative_residual(system: BlockTridiagonalSystem, u, f=None) -> float:
    """``||A u - f||_2 / ||f||_2``; ``f`` defaults to the system's right-hand side."""
    f = system.f if f is None else as_planes(f, system.n_planes, system.dim)
    norm_f = np.sqrt(sum(float(v @ v) for v in f))
    if norm_f == 0.0:
        raise ZeroRightHandSideError("relative residual undefined for a zero right-hand side")
    r = apply(system, u)
    norm_r = np.sqrt(sum(float((a - b) @ (a - b)) for a, b in zip(r, f)))
    return float(norm_r / norm_f)


def identity_system(n_planes, coords, f=None) -> BlockTridiagonalSystem:
    """Decoupled system with identity diagonal blocks."""
    dim = len(coords)
    eye = PlaneBlock(sp.identity(dim, format="csr"), coords)
    zero = PlaneBlock(sp.csr_array((dim, dim)), coords)
    return BlockTridiagonalSystem(
        (eye,) * n_planes, (zero,) * (n_planes - 1), (zero,) * (n_planes - 1), () if f is None else f
    )


# ---------------------------------------------------------------------------
# Matrix Market export / import


def export_system(system: BlockTridiagonalSystem, directory) -> Path:
    """Write one ``{D|E|F}_{index}.mtx`` file per block plus ``f_{index}.txt`` vectors.

    ``E_j`` is written under its row index ``j`` (1..n-1); ``F_j`` under ``j`` (0..n-2).
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for j, d in enumerate(system.D):
        scipy.io.mmwrite(out / f"D_{j}.mtx", sp.coo_matrix(d.matrix), precision=17)
    for j, e in enumerate(system.E, start=1):
        scipy.io.mmwrite(out / f"E_{j}.mtx", sp.coo_matrix(e.matrix), precision=17)
    for j, fb in enumerate(system.F):
        scipy.io.mmwrite(out / f"F_{j}.mtx", sp.coo_matrix(fb.matrix), precision=17)
    for j, v in enumerate(system.f):
        save_plane_vector(out / f"f_{j}.txt", v)
    np.savetxt(out / "coords.txt", system.coords, fmt="%.17g")
    meta = {"n_planes": system.n_planes, "dim": system.dim}
    (out / "system.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out


def import_system(directory) -> BlockTridiagonalSystem:
    src = Path(directory)
    meta = json.loads((src / "system.json").read_text())
    n, dim = meta["n_planes"], meta["dim"]
    coords = np.loadtxt(src / "coords.txt", ndmin=2)

    def block(name):
        m = sp.csr_array(scipy.io.mmread(src / name))
        if m.shape != (dim, dim):
            raise DimensionMismatchError(f"{name} has shape {m.shape}, expected ({dim}, {dim})")
        return PlaneBlock(m, coords)

    D = [block(f"D_{j}.mtx") for j in range(n)]
    E = [block(f"E_{j}.mtx") for j in range(1, n)]
    F = [block(f"F_{j}.mtx") for j in range(n - 1)]
    f = [load_plane_vector(src / f"f_{j}.txt") for j in range(n)]
    return BlockTridiagonalSystem(D, E, F, f)


def save_plane_vector(path, v):
    np.savetxt(path, np.asarray(v, dtype=float), fmt="%.17g")


def load_plane_vector(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=1)
