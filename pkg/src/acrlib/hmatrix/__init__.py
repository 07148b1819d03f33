"""Hierarchical matrices: cluster trees, admissibility and truncated arithmetic."""

from .cluster import (
    DENSE,
    LOWRANK,
    SUB,
    BlockClusterTree,
    Cluster,
    ClusterTree,
    build_block_cluster_tree,
    build_cluster_tree,
)
from .hmat import (
    HMatrix,
    RankStats,
    compress_sparse,
    from_dense,
    hadd,
    hdiagscale,
    hinvert,
    hmatvec,
    hmuladd,
    hmultiply,
    hscale,
    hsub,
    identity,
    memory_footprint,
    rank_stats,
    structure_json,
    zeros,
)
