import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brute import grid_densest, grid_leaves
from pushtrack.mobility import Bounds
from pushtrack.quadtree import QuadTree

SIZE = 1024.0
SQ = Bounds(0.0, 0.0, SIZE, SIZE)


def _leaf_key(n):
    side = SIZE / 2 ** n.depth
    return n.depth, int(round(n.x0 / side)), int(round(n.y0 / side)), sorted(n.members.tolist())


def test_single_and_empty():
    assert len(QuadTree([], SQ).leaves()) == 1
    t = QuadTree([(3, 4)], SQ)
    assert t.root.is_leaf() and t.densest_leaf().members.tolist() == [0]


def test_two_points_split_until_separated():
    t = QuadTree([(1, 1), (1000, 1000)], SQ)
    assert sorted(len(n.members) for n in t.leaves()) == [0, 0, 1, 1]


def test_coincident_points_stop_at_max_depth():
    t = QuadTree([(5, 5)] * 3, SQ, max_depth=4)
    leaf = t.densest_leaf()
    assert leaf.depth == 4 and len(leaf.members) == 3


def test_split_line_goes_to_upper_right():
    t = QuadTree([(512, 512), (10, 10)], SQ)
    (hi,) = [n for n in t.leaves() if 0 in n.members.tolist()]
    assert (hi.x0, hi.y0) == (512, 512)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 60))
def test_every_point_in_exactly_one_leaf(seed, n):
    pts = np.random.default_rng(seed).uniform(0, SIZE, size=(n, 2))
    leaves = QuadTree(pts, SQ).leaves()
    got = sorted(i for leaf in leaves for i in leaf.members.tolist())
    assert got == list(range(n))
    for leaf in leaves:
        for i in leaf.members.tolist():
            assert leaf.x0 <= pts[i, 0] <= leaf.x1 and leaf.y0 <= pts[i, 1] <= leaf.y1
    assert sum(leaf.area for leaf in leaves) == pytest.approx(SIZE * SIZE)


def test_leaves_and_densest_match_grid_counting_200_sets():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        # integer coordinates make clusters and ties likely
        pts = rng.integers(0, 64, size=(n, 2)).astype(float) * 16
        t = QuadTree(pts, SQ, max_depth=6)
        assert sorted(map(_leaf_key, t.leaves())) == sorted(
            (d, ix, iy, m) for d, ix, iy, m in grid_leaves(pts, SIZE, 6))
        assert sorted(t.densest_leaf().members.tolist()) == grid_densest(pts, SIZE, 6)
