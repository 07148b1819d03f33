"""Test problems on the unit cube, assembled plane by plane along ``z``.

Within a plane the unknown ``(ix, iy)`` has index ``iy * n + ix``; plane ``j``
sits at ``z = (j + 1) h``. All operators are scaled so that the 7-point
Laplacian has centre weight 6.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import BlockTridiagonalSystem, GridSpec, PlaneBlock, apply

KINDS = ("poisson", "convdiff", "helmholtz")


@dataclass(frozen=True)
class ProblemSpec:
    """Problem kind plus its parameters.

    ``alpha`` and ``a`` apply to ``convdiff``; ``kappa`` to ``helmholtz``. A
    ``kappa`` of ``None`` selects ``n / 2``, about 12.6 grid points per
    wavelength.
    """

    kind: str
    n: int
    alpha: float = 0.0
    a: float = 1.0
    kappa: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def wavenumber(self) -> float:
        return self.n / 2 if self.kappa is None else float(self.kappa)

    def points_per_wavelength(self) -> float:
        """Grid points per wavelength ``2 pi (n + 1) / kappa`` for Helmholtz."""
        return 2 * np.pi * (self.n + 1) / self.wavenumber

    def build(self):
        """The system, plus the exact discrete solution for ``convdiff`` (else ``None``)."""
        if self.kind == "poisson":
            return assemble_poisson(self.n), None
        if self.kind == "convdiff":
            return assemble_convdiff(self.n, self.alpha, self.a)
        return assemble_helmholtz(self.n, self.wavenumber), None


def _second_difference(n):
    return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n), format="csr")


def _system(D, E, F, f, coords):
    blk = lambda m: PlaneBlock(sp.csr_array(m), coords)
    return BlockTridiagonalSystem(
        tuple(blk(d) for d in D), tuple(blk(e) for e in E), tuple(blk(x) for x in F), tuple(f)
    )


def assemble_poisson(n) -> BlockTridiagonalSystem:
    """7-point Laplacian with homogeneous Dirichlet data and ``f = h^2``."""
    g = GridSpec(n)
    T = _second_difference(n)
    eye = sp.identity(n, format="csr")
    D = sp.kron(eye, T) + sp.kron(T, eye) + 2.0 * sp.identity(n * n)
    minus_eye = -sp.identity(n * n, format="csr")
    f = np.full(n * n, g.h**2)
    return _system([D] * n, [minus_eye] * (n - 1), [minus_eye] * (n - 1), [f] * n, g.plane_coords())


def vortex_field(x, y, z, a=1.0):
    """The 3D vortex velocity ``b(x)``, one array per component."""
    w = a * 2 * np.pi
    bx = np.sin(w * x) * np.sin(w * (0.125 + y)) + np.sin(w * (0.125 + z)) * np.sin(w * x)
    by = np.cos(w * x) * np.cos(w * (0.125 + y)) + np.cos(w * (0.125 + y)) * np.cos(w * z)
    bz = np.cos(w * x) * np.cos(w * (0.125 + z)) + np.sin(w * (0.125 + y)) * np.sin(w * z)
    return bx, by, bz


def convdiff_exact(n) -> list:
    """``sum_d sin(pi x_d) + sin(3 pi x_d)`` sampled on every plane."""
    g = GridSpec(n)
    xy = g.plane_coords()
    s = lambda t: np.sin(np.pi * t) + np.sin(3 * np.pi * t)
    base = s(xy[:, 0]) + s(xy[:, 1])
    return [base + s(z) for z in g.axis()]


def assemble_convdiff(n, alpha, a=1.0):
    """First-order upwind ``-lap u + alpha b . grad u`` and its exact discrete solution.

    Returns ``(system, exact)`` where the right-hand side is the operator
    applied to ``exact``, so ``exact`` solves the discrete system.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    g = GridSpec(n)
    h = g.h
    xy = g.plane_coords()
    x, y = xy[:, 0], xy[:, 1]
    ix = np.tile(np.arange(n), n)
    iy = np.repeat(np.arange(n), n)
    dim = n * n
    D, lower, upper = [], [], []
    for z in g.axis():
        bx, by, bz = (alpha * h * c for c in vortex_field(x, y, z, a))
        center = 6.0 + np.abs(bx) + np.abs(by) + np.abs(bz)
        rows, cols, vals = [np.arange(dim)], [np.arange(dim)], [center]
        # west/east along x, south/north along y
        for step, ok, weight in (
            (-1, ix > 0, -1.0 - np.maximum(bx, 0)),
            (1, ix < n - 1, -1.0 - np.maximum(-bx, 0)),
            (-n, iy > 0, -1.0 - np.maximum(by, 0)),
            (n, iy < n - 1, -1.0 - np.maximum(-by, 0)),
        ):
            r = np.flatnonzero(ok)
            rows.append(r)
            cols.append(r + step)
            vals.append(weight[r])
        D.append(sp.csr_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)))
        lower.append(sp.diags(-1.0 - np.maximum(bz, 0), format="csr"))
        upper.append(sp.diags(-1.0 - np.maximum(-bz, 0), format="csr"))
    exact = convdiff_exact(n)
    shell = _system(D, lower[1:], upper[:-1], [np.zeros(dim)] * n, xy)
    f = apply(shell, exact)
    return shell.with_rhs(f), exact


def fem_1d(n):
    """Linear-element stiffness and mass stencils ``(K1, M1)`` on the interior nodes."""
    h = GridSpec(n).h
    K1 = _second_difference(n) / h
    M1 = sp.diags([1.0, 4.0, 1.0], [-1, 0, 1], shape=(n, n), format="csr") * (h / 6)
    return K1, M1


def assemble_helmholtz(n, kappa) -> BlockTridiagonalSystem:
    """Trilinear FEM ``K - kappa^2 M`` (27-point stencils) with unit load, ``f = h^3``.

    Both 3D stencils are tensor products of the 1D stiffness ``[-1, 2, -1] / h``
    and mass ``h [1, 4, 1] / 6``; the ``z`` factor becomes the block coupling.
    """
    g = GridSpec(n)
    K1, M1 = fem_1d(n)
    KM = sp.kron(M1, K1) + sp.kron(K1, M1)  # in-plane stiffness part (y slow, x fast)
    MM = sp.kron(M1, M1)
    h = g.h
    k_z = {0: 2.0 / h, 1: -1.0 / h}
    m_z = {0: 4.0 * h / 6, 1: h / 6}
    block = {o: (k_z[o] * MM + m_z[o] * KM - kappa**2 * m_z[o] * MM).tocsr() for o in (0, 1)}
    f = np.full(n * n, h**3)
    return _system([block[0]] * n, [block[1]] * (n - 1), [block[1]] * (n - 1), [f] * n, g.plane_coords())


def fem_1d_eigenvalues(n) -> np.ndarray:
    """Generalized eigenvalues of ``K1 v = mu M1 v``: ``(6 / h^2)(1 - cos t) / (2 + cos t)``, ``t = i pi h``."""
    h = GridSpec(n).h
    t = np.arange(1, n + 1) * np.pi * h
    return 6.0 / h**2 * (1 - np.cos(t)) / (2 + np.cos(t))


def helmholtz_resonance_gap(n, kappa) -> float:
    """Relative distance ``min |mu_i + mu_j + mu_k - kappa^2| / kappa^2`` to the nearest resonance.

    The 3D operator is singular when ``kappa^2`` hits a sum of three 1D
    eigenvalues; a small gap means a badly conditioned system.
    """
    mu = fem_1d_eigenvalues(n)
    sums = (mu[:, None, None] + mu[None, :, None] + mu[None, None, :]).ravel()
    return float(np.min(np.abs(sums - kappa**2)) / kappa**2)


def assemble(spec: ProblemSpec):
    return spec.build()
