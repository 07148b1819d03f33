"""Preconditioned conjugate gradients and iterative refinement around ACR.

Both methods stop on the true relative residual ``||b - A u|| / ||b||``,
recomputed every iteration with the exact sparse operator.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .acr import AcrFactorization, acr_solve
from .core import BlockTridiagonalSystem, as_planes, flatten, unflatten
from .errors import DivergenceError, IndefiniteError


@dataclass
class IterationTrace:
    """Convergence record of one iterative solve.

    ``residual_history`` holds the true relative residual before the first
    iteration and after every iteration. ``apply_time`` is the mean wall time
    of one preconditioner application; ``apply_total`` their sum.
    """

    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    apply_time: float = 0.0
    apply_total: float = 0.0
    total_time: float = 0.0
    method: str = "pcg"

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "IterationTrace":
        return cls(**data)


def _preconditioner(precond, n_planes):
    if precond is None:
        return lambda r: r.copy()
    if isinstance(precond, AcrFactorization):
        return lambda r: flatten(acr_solve(precond, unflatten(r, n_planes)))
    return precond


def pcg(system: BlockTridiagonalSystem, precond, b=None, tol=1e-6, maxit=500):
    """Conjugate gradients with ``M^{-1} r = acr_solve(precond, r)``.

    ``precond`` may be an ``AcrFactorization``, any callable on flat vectors,
    or ``None`` for plain CG. ``b`` defaults to the system's right-hand side.

    Returns
    -------
    u : list of plane vectors
    trace : IterationTrace

    Raises
    ------
    IndefiniteError
        If ``p^T A p <= 0`` for a search direction ``p``.
    """
    t0 = time.perf_counter()
    n = system.n_planes
    A = system.tosparse()
    b = flatten(system.f if b is None else as_planes(b, n, system.dim))
    apply_M = _preconditioner(precond, n)
    trace = IterationTrace(method="pcg")
    norm_b = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if norm_b == 0.0:
        trace.converged = True
        trace.residual_history.append(0.0)
        trace.total_time = time.perf_counter() - t0
        return unflatten(x, n), trace
    r = b.copy()
    trace.residual_history.append(1.0)
    applies = []

    def precondition(v):
        ts = time.perf_counter()
        z = apply_M(v)
        applies.append(time.perf_counter() - ts)
        return z

    z = precondition(r)
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxit + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if not pAp > 0.0:
            raise IndefiniteError(f"p^T A p = {pAp:.3e} at iteration {it}")
        a = rz / pAp
        x += a * p
        r -= a * Ap
        true_res = float(np.linalg.norm(b - A @ x)) / norm_b
        trace.residual_history.append(true_res)
        trace.iterations = it
        if true_res <= tol:
            trace.converged = True
            break
        z = precondition(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    trace.apply_total = float(sum(applies))
    trace.apply_time = trace.apply_total / len(applies) if applies else 0.0
    trace.total_time = time.perf_counter() - t0
    return unflatten(x, n), trace


def iterative_refinement(fact: AcrFactorization, system: BlockTridiagonalSystem, b=None, tol=1e-10, maxit=50):
    """``u <- u + acr_solve(fact, b - A u)`` until the relative residual is at most ``tol``.

    Raises
    ------
    DivergenceError
        If the residual grows in three consecutive steps.
    """
    t0 = time.perf_counter()
    n = system.n_planes
    A = system.tosparse()
    b = flatten(system.f if b is None else as_planes(b, n, system.dim))
    trace = IterationTrace(method="refine")
    norm_b = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if norm_b == 0.0:
        trace.converged = True
        trace.residual_history.append(0.0)
        trace.total_time = time.perf_counter() - t0
        return unflatten(x, n), trace
    r = b.copy()
    trace.residual_history.append(1.0)
    growth = 0
    applies = []
    for it in range(1, maxit + 1):
        ts = time.perf_counter()
        x += flatten(acr_solve(fact, unflatten(r, n)))
        applies.append(time.perf_counter() - ts)
        r = b - A @ x
        res = float(np.linalg.norm(r)) / norm_b
        growth = growth + 1 if res > trace.residual_history[-1] else 0
        trace.residual_history.append(res)
        trace.iterations = it
        if res <= tol:
            trace.converged = True
            break
        if growth >= 3:
            trace.apply_total = float(sum(applies))
            trace.total_time = time.perf_counter() - t0
            raise DivergenceError(f"refinement residual grew for 3 consecutive steps (now {res:.3e})")
    trace.apply_total = float(sum(applies))
    trace.apply_time = trace.apply_total / len(applies) if applies else 0.0
    trace.total_time = time.perf_counter() - t0
    return unflatten(x, n), trace
