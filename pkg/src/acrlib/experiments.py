"""Experiment drivers shared by the acceptance suite and ``scripts/``.

Each function returns plain rows (dicts) and drops its factorizations before
returning, so sweeps over large grids keep only one factorization alive.
"""

from __future__ import annotations

import gc
import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .acr import DENSE_CONFIG, AcrConfig, acr_factor, acr_solve, dense_cr_bytes
from .core import GridSpec, flatten, relative_residual
from .discretize import ProblemSpec, assemble_poisson, helmholtz_resonance_gap
from .hmatrix import build_block_cluster_tree, build_cluster_tree, compress_sparse, hinvert, memory_footprint
from .krylov import pcg


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def oracle_equivalence(kinds=("poisson", "convdiff", "helmholtz"), sizes=(4, 8, 16), alpha=10.0):
    """Dense cyclic reduction against a sparse LU solve of the assembled operator."""
    rows = []
    for kind in kinds:
        for n in sizes:
            s, _ = ProblemSpec(kind, n, alpha=alpha).build()
            u = flatten(acr_solve(acr_factor(s, DENSE_CONFIG), s.f))
            ref = spla.splu(s.tosparse().tocsc()).solve(flatten(s.f))
            rows.append(
                {
                    "kind": kind,
                    "n": n,
                    "residual": relative_residual(s, [*u.reshape(n, -1)]),
                    "vs_lu": float(np.linalg.norm(u - ref) / np.linalg.norm(ref)),
                }
            )
    return rows


def acr_run(spec: ProblemSpec, config: AcrConfig, with_pcg_tol=None):
    """Factor, solve and summarize one problem; optional PCG on top of the factorization."""
    s, exact = spec.build()
    t0 = time.perf_counter()
    fact = acr_factor(s, config)
    t_factor = time.perf_counter() - t0
    st = fact.rank_stats()
    row = {
        "kind": spec.kind,
        "n": spec.n,
        "N": s.N,
        "eps": config.eps,
        "eta": config.eta,
        "leaf": config.leaf_size,
        "factor_bytes": fact.factor_bytes,
        "average_rank": st.average_rank,
        "largest_rank": st.largest_rank,
        "t_factor": t_factor,
    }
    t0 = time.perf_counter()
    u = acr_solve(fact, s.f)
    row["t_solve"] = time.perf_counter() - t0
    row["residual"] = relative_residual(s, u)
    if exact is not None:
        ex = flatten(exact)
        row["error_vs_exact"] = float(np.linalg.norm(flatten(u) - ex) / np.linalg.norm(ex))
    if with_pcg_tol is not None:
        u, trace = pcg(s, fact, tol=with_pcg_tol)
        row.update(
            pcg_iterations=trace.iterations,
            pcg_residual=relative_residual(s, u),
            pcg_converged=trace.converged,
            apply_time=trace.apply_time,
            pcg_time=trace.total_time,
        )
    del fact, u
    gc.collect()
    return row


def rank_sweep(kind, sizes, eps, eta=2.0, leaf=32, **problem):
    return [acr_run(ProblemSpec(kind, n, **problem), AcrConfig(eps=eps, eta=eta, leaf_size=leaf)) for n in sizes]


def pcg_sweep(n, eps_values, tol=1e-6, leaf=32, eta=2.0):
    spec = ProblemSpec("poisson", n)
    return [acr_run(spec, AcrConfig(eps=e, eta=eta, leaf_size=leaf), with_pcg_tol=tol) for e in eps_values]


def dense_cr_memory(sizes):
    return [{"n": n, "N": n**3, "factor_bytes": dense_cr_bytes(n, n * n)} for n in sizes]


def laplace_2d(n):
    T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n))
    eye = sp.identity(n)
    return sp.csr_array(sp.kron(eye, T) + sp.kron(T, eye))


def admissibility_comparison(n=64, eps=1e-4, eta=2.0, leaf=32):
    """H-inverse of the 2D Laplacian under standard and weak admissibility."""
    A = laplace_2d(n)
    Ad = A.toarray()
    tree = build_cluster_tree(GridSpec(n).plane_coords(), leaf)
    rows = []
    for adm in ("standard", "weak"):
        bct = build_block_cluster_tree(tree, eta, adm)
        t0 = time.perf_counter()
        inv = hinvert(compress_sparse(A, bct, eps), eps)
        elapsed = time.perf_counter() - t0
        err = np.linalg.norm(Ad @ inv.to_dense() - np.eye(n * n)) / np.sqrt(n * n)
        st = inv.rank_stats()
        rows.append(
            {
                "admissibility": adm,
                "bytes": memory_footprint(inv),
                "largest_rank": st.largest_rank,
                "average_rank": st.average_rank,
                "inverse_error": float(err),
                "seconds": elapsed,
            }
        )
    return rows


def helmholtz_rank_sweep(sizes, eps, eta=2.0, leaf=32):
    """Ranks at ``kappa = n / 2`` (about 12 points per wavelength), with resonance gaps."""
    rows = rank_sweep("helmholtz", sizes, eps, eta, leaf)
    for r in rows:
        spec = ProblemSpec("helmholtz", r["n"])
        r["kappa"] = spec.wavenumber
        r["points_per_wavelength"] = spec.points_per_wavelength()
        r["resonance_gap"] = helmholtz_resonance_gap(r["n"], spec.wavenumber)
    return rows


def convdiff_sweep(n, alphas, eps, leaf=32, eta=2.0):
    rows = []
    for a in alphas:
        spec = ProblemSpec("convdiff", n, alpha=a)
        row = acr_run(spec, AcrConfig(eps=eps, eta=eta, leaf_size=leaf))
        s, _ = spec.build()
        row["alpha"] = a
        row["symmetric"] = s.is_symmetric(tol=1e-12)
        rows.append(row)
    return rows


def poisson_memory_sweep(sizes, eps=1e-3, leaf=32):
    return rank_sweep("poisson", sizes, eps, leaf=leaf)
