"""Plane-parallel cyclic reduction on worker threads with a message ledger.

Planes are dealt to ``p`` workers in contiguous ranges of ``n / p`` and stay
with the worker that owns their original index. Each level runs two phases
separated by barriers: eliminated planes are inverted and their blocks
``{E, D^{-1}, F}`` are sent to the owners of the neighbouring kept planes;
then kept planes are updated from what they received. Workers exchange data
only through their inbox queues, and every cross-worker payload is recorded.

The schedule is the one of the sequential factorization, and the per-plane
kernels are the same functions, so results are bitwise identical for every
``p``.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .acr import (
    AcrConfig,
    AcrFactorization,
    Level,
    _factor_top,
    _level_blocks,
    _solve_top,
    back_substitute,
    invert_plane,
    level_origin,
    make_arithmetic,
    reduce_plane,
    reduce_rhs,
)
from .core import BlockTridiagonalSystem, as_planes
from .errors import ScheduleError


def _is_pow2(x):
    return x >= 1 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class ParallelPlan:
    """Plane-to-worker map of every elimination level.

    ``assignment[i][k]`` is the worker owning position ``k`` of level ``i``;
    the last level holds the single remaining plane.
    """

    n_planes: int
    p: int
    assignment: tuple

    @property
    def c_level(self) -> int:
        """Level at which every worker holds exactly one plane, ``log2(n / p)``."""
        return (self.n_planes // self.p).bit_length() - 1

    @property
    def n_levels(self) -> int:
        return len(self.assignment)

    def owner(self, level, position) -> int:
        return self.assignment[level][position]

    def planes_per_worker(self, level) -> list:
        counts = [0] * self.p
        for w in self.assignment[level]:
            counts[w] += 1
        return counts

    def active_workers(self, level) -> int:
        return sum(c > 0 for c in self.planes_per_worker(level))

    def edges(self, level) -> list:
        """``(eliminated, kept)`` position pairs that exchange data at ``level``."""
        m = len(self.assignment[level])
        if m == 1:
            return []
        out = []
        for k in range(0, m, 2):
            for nb in (k - 1, k + 1):
                if 0 <= nb < m:
                    out.append((k, nb))
        return out

    def remote_edges(self, level) -> list:
        a = self.assignment[level]
        return [(k, nb) for k, nb in self.edges(level) if a[k] != a[nb]]

    def to_dict(self) -> dict:
        return {
            "n_planes": self.n_planes,
            "p": self.p,
            "c_level": self.c_level,
            "planes_per_worker": [self.planes_per_worker(i) for i in range(self.n_levels)],
        }


def plan_schedule(n_planes, p) -> ParallelPlan:
    """Contiguous plane ranges per worker; planes keep their owner across levels."""
    if not _is_pow2(n_planes):
        raise ScheduleError(f"n_planes must be a power of two, got {n_planes}")
    if not _is_pow2(p) or p > n_planes:
        raise ScheduleError(f"p must be a power of two with 1 <= p <= {n_planes}, got {p}")
    width = n_planes // p
    levels = []
    m, i = n_planes, 0
    while m >= 1:
        levels.append(tuple(level_origin(i, k) // width for k in range(m)))
        if m == 1:
            break
        m //= 2
        i += 1
    return ParallelPlan(n_planes, p, tuple(levels))


def critical_path_length(plan: ParallelPlan) -> int:
    """Rows processed by the busiest worker: ``sum_{i<r} n / (2^{i+1} p)`` plus ``log2 p``.

    Below the C-level ``r`` a worker eliminates half of its planes per level;
    past it, each remaining level costs one row.
    """
    n, p, r = plan.n_planes, plan.p, plan.c_level
    below = sum(-(-n // (2 ** (i + 1) * p)) for i in range(r))
    return below + (p.bit_length() - 1)


@dataclass
class LevelTraffic:
    level: int
    messages: int = 0
    bytes: int = 0
    active_workers: int = 0
    idle_workers: int = 0
    edges: list = field(default_factory=list)  # (src_plane, dst_plane, src_worker, dst_worker), original indices

    def to_dict(self, with_edges=False) -> dict:
        out = {
            "level": self.level,
            "messages": self.messages,
            "bytes": self.bytes,
            "active_workers": self.active_workers,
            "idle_workers": self.idle_workers,
        }
        if with_edges:
            out["edges"] = [list(e) for e in self.edges]
        return out


@dataclass
class MessageLedger:
    """Cross-worker traffic per level, for one phase (factor or solve)."""

    phase: str
    levels: list = field(default_factory=list)

    @property
    def total_messages(self) -> int:
        return sum(l.messages for l in self.levels)

    @property
    def total_bytes(self) -> int:
        return sum(l.bytes for l in self.levels)

    def record(self, level, src_plane, dst_plane, src_worker, dst_worker, nbytes):
        entry = self.levels[level]
        entry.messages += 1
        entry.bytes += int(nbytes)
        entry.edges.append((src_plane, dst_plane, src_worker, dst_worker))

    def to_dict(self, with_edges=False) -> dict:
        return {
            "phase": self.phase,
            "total_messages": self.total_messages,
            "total_bytes": self.total_bytes,
            "levels": [l.to_dict(with_edges) for l in self.levels],
        }


def _ledger(phase, plan):
    levels = []
    for i in range(plan.n_levels):
        active = plan.active_workers(i)
        levels.append(LevelTraffic(i, active_workers=active, idle_workers=plan.p - active))
    return MessageLedger(phase, levels)


class _Mesh:
    """Worker threads, one inbox each, a shared barrier and a ledger."""

    def __init__(self, plan, ledger):
        self.plan = plan
        self.ledger = ledger
        self.inbox = [queue.Queue() for _ in range(plan.p)]
        self.barrier = threading.Barrier(plan.p)
        self._lock = threading.Lock()
        self.error = None

    def send(self, level, src_pos, dst_pos, payload, nbytes):
        a = self.plan.assignment[level]
        src, dst = a[src_pos], a[dst_pos]
        if src != dst:
            with self._lock:
                self.ledger.record(level, level_origin(level, src_pos), level_origin(level, dst_pos), src, dst, nbytes)
        self.inbox[dst].put((level, src_pos, dst_pos, payload))

    def receive(self, worker, count):
        got = {}
        for _ in range(count):
            level, src_pos, dst_pos, payload = self.inbox[worker].get()
            got[(src_pos, dst_pos)] = payload
        return got

    def sync(self):
        self.barrier.wait()

    def run(self, body):
        def main(w):
            try:
                body(w)
            except threading.BrokenBarrierError:
                pass
            except BaseException as err:  # propagate the first failure to the caller
                with self._lock:
                    if self.error is None:
                        self.error = err
                self.barrier.abort()

        threads = [threading.Thread(target=main, args=(w,), name=f"acr-worker-{w}") for w in range(self.plan.p)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if self.error is not None:
            raise self.error


def _check_plan(plan, n_planes):
    if plan.n_planes != n_planes:
        raise ScheduleError(f"plan is for {plan.n_planes} planes, system has {n_planes}")


def execute_parallel_factor(system: BlockTridiagonalSystem, plan: ParallelPlan, config: AcrConfig | None = None):
    """Factor ``system`` on ``plan.p`` worker threads.

    Returns ``(factorization, ledger)``; the factorization equals
    ``acr_factor(system, config)`` bitwise.
    """
    config = config or AcrConfig()
    if config.stop_planes != 1:
        raise ScheduleError("the parallel schedule reduces to a single plane (stop_planes=1)")
    _check_plan(plan, system.n_planes)
    t0 = time.perf_counter()
    arith = make_arithmetic(config, system.coords)
    D0, E0, F0 = _level_blocks(arith, system)
    E_keep0 = [arith.stored(pb, op) for pb, op in zip(system.E, E0)]
    F_keep0 = [arith.stored(pb, op) for pb, op in zip(system.F, F0)]
    ledger = _ledger("factor", plan)
    mesh = _Mesh(plan, ledger)
    n_red = plan.n_levels - 1
    # per level, position -> block; each entry written only by its owner
    D = [dict() for _ in range(plan.n_levels)]
    E = [dict() for _ in range(plan.n_levels)]  # E[i][k] couples k to k - 1
    F = [dict() for _ in range(plan.n_levels)]  # F[i][k] couples k to k + 1
    dinv = [dict() for _ in range(n_red)]
    D[0].update(enumerate(D0))
    E[0].update((k + 1, e) for k, e in enumerate(E0))
    F[0].update(enumerate(F0))
    seconds = [0.0] * n_red
    top = {}

    def worker(w):
        for i in range(n_red):
            a = plan.assignment[i]
            m = len(a)
            ts = time.perf_counter()
            # invert phase
            for k in range(0, m, 2):
                if a[k] != w:
                    continue
                dinv[i][k] = invert_plane(arith, D[i][k], i, k)
                payload = (E[i].get(k), dinv[i][k], F[i].get(k))
                nbytes = sum(arith.nbytes(b) for b in payload if b is not None)
                for nb in (k - 1, k + 1):
                    if 0 <= nb < m:
                        mesh.send(i, k, nb, payload, nbytes)
            mesh.sync()
            # update phase
            mine = [j for j in range(1, m, 2) if a[j] == w]
            expected = sum((j + 1 < m) + 1 for j in mine)
            got = mesh.receive(w, expected)
            for j in mine:
                E_prev, dinv_prev, F_prev = got[(j - 1, j)]
                has_next = j + 1 < m
                E_next, dinv_next, F_next = got[(j + 1, j)] if has_next else (None, None, None)
                d, e, f = reduce_plane(
                    arith, D[i][j], E[i][j], F[i].get(j), F_prev, E_prev, dinv_prev, dinv_next, E_next, F_next
                )
                k = j // 2
                D[i + 1][k] = d
                if e is not None:
                    E[i + 1][k] = e
                if f is not None:
                    F[i + 1][k] = f
            mesh.sync()
            if w == 0:
                seconds[i] = time.perf_counter() - ts
        if plan.assignment[n_red][0] == w:
            top["inv"] = _factor_top(arith, [D[n_red][0]], [], [], n_red)

    mesh.run(worker)
    levels = []
    for i in range(n_red):
        m = len(plan.assignment[i])
        if i == 0:
            Ek, Fk = E_keep0, F_keep0
        else:
            Ek = [arith.finalize(E[i][k]) for k in range(1, m)]
            Fk = [arith.finalize(F[i][k]) for k in range(m - 1)]
        levels.append(Level(i, m, Ek, Fk, [dinv[i][k] for k in range(0, m, 2)], seconds[i]))
    fact = AcrFactorization(config, arith, system.n_planes, system.dim, levels, top["inv"], 1)
    fact.timings = {"factor": time.perf_counter() - t0, "workers": plan.p}
    return fact, ledger


def execute_parallel_solve(fact: AcrFactorization, plan: ParallelPlan, f):
    """Distributed forward reduction and back-substitution.

    Eliminated planes send ``D^{-1} f`` to their kept neighbours on the way
    up; kept planes send their solution to both eliminated neighbours on the
    way down. Returns ``(u, ledger)`` with ``u`` equal to ``acr_solve`` bitwise.
    """
    _check_plan(plan, fact.n_planes)
    if fact.top_planes != 1 or fact.depth != plan.n_levels - 1:
        raise ScheduleError("factorization does not match the plan's level structure")
    arith = fact.arith
    fs0 = [arith.to_tree(v) for v in as_planes(f, fact.n_planes, fact.dim)]
    ledger = _ledger("solve", plan)
    mesh = _Mesh(plan, ledger)
    n_red = fact.depth
    rhs = [dict() for _ in range(plan.n_levels)]
    rhs[0].update(enumerate(fs0))
    u = [dict() for _ in range(plan.n_levels)]

    def worker(w):
        for i, lev in enumerate(fact.levels):
            a = plan.assignment[i]
            m = lev.n_planes
            for k in range(0, m, 2):
                if a[k] == w:
                    g = arith.matvec(lev.dinv[k // 2], rhs[i][k])
                    for nb in (k - 1, k + 1):
                        if 0 <= nb < m:
                            mesh.send(i, k, nb, g, g.nbytes)
            mesh.sync()
            mine = [j for j in range(1, m, 2) if a[j] == w]
            got = mesh.receive(w, sum((j + 1 < m) + 1 for j in mine))
            for j in mine:
                has_next = j + 1 < m
                rhs[i + 1][j // 2] = reduce_rhs(
                    arith, rhs[i][j], lev.E[j - 1], lev.F[j] if has_next else None,
                    got[(j - 1, j)], got[(j + 1, j)] if has_next else None,
                )
            mesh.sync()
        if plan.assignment[n_red][0] == w:
            u[n_red][0] = _solve_top(fact, [rhs[n_red][0]])[0]
        mesh.sync()
        for i in reversed(range(n_red)):
            lev = fact.levels[i]
            a = plan.assignment[i]
            m = lev.n_planes
            for j in range(1, m, 2):
                if a[j] == w:
                    uj = u[i + 1][j // 2]
                    u[i][j] = uj
                    for nb in (j - 1, j + 1):
                        if nb < m:
                            mesh.send(i, j, nb, uj, uj.nbytes)
            mesh.sync()
            mine = [k for k in range(0, m, 2) if a[k] == w]
            got = mesh.receive(w, sum((k > 0) + (k + 1 < m) for k in mine))
            for k in mine:
                u[i][k] = back_substitute(
                    arith,
                    lev.dinv[k // 2],
                    rhs[i][k],
                    lev.E[k - 1] if k > 0 else None,
                    got.get((k - 1, k)),
                    lev.F[k] if k + 1 < m else None,
                    got.get((k + 1, k)),
                )
            mesh.sync()

    mesh.run(worker)
    out = [arith.from_tree(u[0][k]) for k in range(fact.n_planes)]
    return out, ledger
