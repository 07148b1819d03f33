"""Geometric cluster trees and block cluster trees over plane points."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DENSE = "dense"
LOWRANK = "lowrank"
SUB = "sub"


@dataclass(eq=False)
class Cluster:
    """Node of a cluster tree: the contiguous range ``[start, stop)`` in tree order."""

    index: int
    start: int
    stop: int
    lo: np.ndarray
    hi: np.ndarray
    level: int
    children: tuple = ()
    size: int = field(init=False, default=0)

    def __post_init__(self):
        self.size = self.stop - self.start

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def parts(self) -> tuple:
        """Partition used when a block containing this cluster is subdivided."""
        return self.children if self.children else (self,)

    def distance(self, other: "Cluster") -> float:
        gap = np.maximum(0.0, np.maximum(self.lo - other.hi, other.lo - self.hi))
        return float(np.linalg.norm(gap))

    def __repr__(self):
        return f"Cluster({self.start}:{self.stop})"


@dataclass(eq=False)
class ClusterTree:
    root: Cluster
    perm: np.ndarray  # tree position -> original index
    leaf_size: int
    nodes: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.root.size

    @property
    def iperm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(len(self.perm))
        return inv

    def leaves(self):
        return [c for c in self.nodes if c.is_leaf]

    @property
    def depth(self) -> int:
        return max(c.level for c in self.nodes)


def build_cluster_tree(coords, leaf_size=32) -> ClusterTree:
    """Recursive median bisection along the longest bounding-box axis.

    Ties in the sort are broken by original index (stable sort), so the tree
    is a deterministic function of the input order.
    """
    pts = np.asarray(coords, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("cannot cluster an empty point set")
    if leaf_size < 1:
        raise ValueError(f"leaf_size must be >= 1, got {leaf_size}")
    perm = np.arange(len(pts))
    nodes = []

    def build(start, stop, level):
        idx = perm[start:stop]
        sub = pts[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        node = Cluster(len(nodes), start, stop, lo, hi, level)
        nodes.append(node)
        if stop - start > leaf_size:
            axis = int(np.argmax(hi - lo))
            order = np.argsort(sub[:, axis], kind="stable")
            perm[start:stop] = idx[order]
            mid = start + (stop - start) // 2
            node.children = (build(start, mid, level + 1), build(mid, stop, level + 1))
        return node

    root = build(0, len(pts), 0)
    return ClusterTree(root, perm, leaf_size, nodes)


@dataclass(eq=False)
class BlockNode:
    rows: Cluster
    cols: Cluster
    kind: str
    children: tuple = ()  # grid (tuple of row tuples) for SUB nodes
    offsets: tuple = ()  # per child (r0, r1, c0, c1) relative to this block

    def __post_init__(self):
        self.m = self.rows.size
        self.n = self.cols.size

    @property
    def shape(self):
        return self.m, self.n

    def set_children(self, grid):
        self.children = grid
        r, c = self.rows.start, self.cols.start
        self.offsets = tuple(
            tuple(
                (b.rows.start - r, b.rows.stop - r, b.cols.start - c, b.cols.stop - c) for b in row
            )
            for row in grid
        )


class BlockClusterTree:
    """Block partition of ``tree x tree`` under an admissibility condition.

    ``admissibility`` is ``"standard"`` (``min(diam) <= eta * dist``) or
    ``"weak"`` (every off-diagonal block is admissible).
    """

    def __init__(self, tree: ClusterTree, eta=2.0, admissibility="standard"):
        if eta <= 0:
            raise ValueError(f"eta must be positive, got {eta}")
        if admissibility not in ("standard", "weak"):
            raise ValueError(f"unknown admissibility {admissibility!r}")
        self.tree = tree
        self.eta = float(eta)
        self.admissibility = admissibility
        self._nodes = {}
        self.root = self._build(tree.root, tree.root)

    def is_admissible(self, t: Cluster, s: Cluster) -> bool:
        if self.admissibility == "weak":
            return t is not s
        return min(t.diameter, s.diameter) <= self.eta * t.distance(s)

    def _build(self, t, s):
        if self.is_admissible(t, s):
            node = BlockNode(t, s, LOWRANK)
        elif t.is_leaf and s.is_leaf:
            node = BlockNode(t, s, DENSE)
        else:
            node = BlockNode(t, s, SUB)
            node.set_children(tuple(tuple(self._build(a, b) for b in s.parts) for a in t.parts))
        self._nodes[(t.index, s.index)] = node
        return node

    def node(self, t: Cluster, s: Cluster) -> BlockNode:
        return self._nodes[(t.index, s.index)]

    def leaves(self):
        out, stack = [], [self.root]
        while stack:
            b = stack.pop()
            if b.kind == SUB:
                for row in reversed(b.children):
                    stack.extend(reversed(row))
            else:
                out.append(b)
        return out

    def counts(self):
        leaves = self.leaves()
        return {
            "dense": sum(b.kind == DENSE for b in leaves),
            "lowrank": sum(b.kind == LOWRANK for b in leaves),
        }


def build_block_cluster_tree(tree: ClusterTree, eta=2.0, admissibility="standard"):
    return BlockClusterTree(tree, eta, admissibility)
