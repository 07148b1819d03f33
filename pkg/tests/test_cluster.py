import numpy as np
import pytest
from hypothesis import given, strategies as st

from acrlib.core import GridSpec
from acrlib.hmatrix import DENSE, LOWRANK, build_block_cluster_tree, build_cluster_tree


@given(st.integers(1, 300), st.integers(1, 40), st.integers(0, 2**31 - 1))
def test_tree_partitions_indices(n, leaf, seed):
    coords = np.random.default_rng(seed).random((n, 2))
    tree = build_cluster_tree(coords, leaf)
    assert sorted(tree.perm) == list(range(n))
    for c in tree.nodes:
        if c.is_leaf:
            assert c.size <= max(leaf, 1)
        else:
            assert c.children[0].start == c.start and c.children[-1].stop == c.stop
            assert c.children[0].stop == c.children[1].start
        pts = coords[tree.perm[c.start:c.stop]]
        assert np.all(pts >= c.lo - 1e-15) and np.all(pts <= c.hi + 1e-15)


def test_tree_deterministic():
    coords = GridSpec(16).plane_coords()
    a = build_cluster_tree(coords, 16)
    b = build_cluster_tree(coords, 16)
    assert np.array_equal(a.perm, b.perm)
    assert a.depth == 4  # 256 points halved down to 16


def _cover(bct):
    n = bct.tree.size
    hits = np.zeros((n, n), dtype=int)
    for b in bct.leaves():
        hits[b.rows.start:b.rows.stop, b.cols.start:b.cols.stop] += 1
    return hits


@pytest.mark.parametrize("adm", ["standard", "weak"])
def test_block_leaves_cover_once(adm):
    tree = build_cluster_tree(GridSpec(12).plane_coords(), 8)
    bct = build_block_cluster_tree(tree, 2.0, adm)
    assert np.all(_cover(bct) == 1)


def test_standard_admissibility_holds():
    tree = build_cluster_tree(GridSpec(16).plane_coords(), 16)
    bct = build_block_cluster_tree(tree, 2.0)
    for b in bct.leaves():
        t, s = b.rows, b.cols
        if b.kind == LOWRANK:
            assert min(t.diameter, s.diameter) <= 2.0 * t.distance(s)
        else:
            assert b.kind == DENSE and t.is_leaf and s.is_leaf
            assert t.distance(s) == 0.0 or min(t.diameter, s.diameter) > 2.0 * t.distance(s)


def test_weak_has_only_diagonal_dense_leaves():
    tree = build_cluster_tree(GridSpec(16).plane_coords(), 16)
    bct = build_block_cluster_tree(tree, 2.0, "weak")
    dense = [b for b in bct.leaves() if b.kind == DENSE]
    assert all(b.rows is b.cols for b in dense)
    assert len(dense) == len(tree.leaves())


def test_larger_eta_admits_more():
    tree = build_cluster_tree(GridSpec(16).plane_coords(), 8)
    lo = build_block_cluster_tree(tree, 0.5).counts()
    hi = build_block_cluster_tree(tree, 4.0).counts()
    assert hi["dense"] <= lo["dense"]


def test_bad_parameters():
    tree = build_cluster_tree(GridSpec(4).plane_coords(), 4)
    with pytest.raises(ValueError):
        build_block_cluster_tree(tree, 0.0)
    with pytest.raises(ValueError):
        build_block_cluster_tree(tree, 2.0, "strong")
