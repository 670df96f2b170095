import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphacd.blockspace import (BlockMetric, BlockPartition, BlockVector, block_norm_sq,
                                metric_apply, metric_solve, restrict, scale_blocks,
                                weighted_inner, weighted_norm_sq)


def bv(sizes, values):
    return BlockVector(BlockPartition(sizes), np.asarray(values, dtype=float))


def test_partition_layout():
    part = BlockPartition([2, 1, 3])
    assert part.n == 3 and part.N == 6
    assert list(part.offsets) == [0, 2, 3, 6]
    assert part.block_of.tolist() == [0, 0, 1, 2, 2, 2]
    with pytest.raises(ValueError):
        BlockPartition([2, 0])
    with pytest.raises(IndexError):
        part.slice(3)


def test_block_norm_examples():
    x = bv([2], [3, 4])
    assert block_norm_sq(x, 0, BlockMetric.identity(x.partition)) == 25
    assert block_norm_sq(bv([2], [0, 0]), 0, BlockMetric.identity(x.partition)) == 0
    m = BlockMetric(x.partition, [np.array([2.0, 1.0])])
    assert block_norm_sq(bv([2], [1, 1]), 0, m) == 3
    with pytest.raises(IndexError):
        block_norm_sq(x, 1, m)


def test_weighted_norm_examples():
    part = BlockPartition.scalar(3)
    e1 = BlockVector(part, np.array([1.0, 0, 0]))
    assert weighted_norm_sq(e1, np.ones(3), BlockMetric.identity(part)) == 1
    x = bv([1, 1], [1, 1])
    assert weighted_norm_sq(x, [2, 3], BlockMetric.identity(x.partition)) == 5
    with pytest.raises(ValueError):
        weighted_norm_sq(x, [1, 2, 3], BlockMetric.identity(x.partition))


def test_weighted_inner_examples():
    part = BlockPartition.scalar(2)
    e1 = BlockVector(part, np.array([1.0, 0]))
    e2 = BlockVector(part, np.array([0, 1.0]))
    assert weighted_inner(e1, e1, np.ones(2)) == 1
    assert weighted_inner(e1, e2, np.ones(2)) == 0
    assert weighted_inner(bv([1, 1], [1, 2]), bv([1, 1], [1, 1]), [2, 3]) == 8
    with pytest.raises(ValueError):
        weighted_inner(e1, bv([2], [1, 0]), np.ones(2))


def test_restrict_examples():
    h = bv([1, 1, 1], [1, 2, 3])
    assert restrict(h, [0, 1, 2]).values.tolist() == [1, 2, 3]
    assert restrict(h, []).values.tolist() == [0, 0, 0]
    assert restrict(h, [0, 2]).values.tolist() == [1, 0, 3]


def test_scale_blocks_examples():
    x = bv([2, 1], [1, 1, 1])
    assert scale_blocks([1, 1], x).values.tolist() == [1, 1, 1]
    assert scale_blocks([2, 5], x).values.tolist() == [2, 2, 5]
    y = bv([1, 1, 1], [1, 2, 3])
    assert scale_blocks([2, 3, 4], y).values.tolist() == [2, 6, 12]
    with pytest.raises(ValueError):
        scale_blocks([1, 2, 3], x)


def test_metric_examples():
    part = BlockPartition.scalar(1)
    x = BlockVector(part, np.array([4.0]))
    assert metric_apply(BlockMetric.identity(part), x).values[0] == 4
    m = BlockMetric(part, [np.array([2.0])])
    assert metric_apply(m, x).values[0] == 8
    assert metric_solve(m, x).values[0] == 2
    with pytest.raises(ValueError):
        BlockMetric(BlockPartition([2]), [np.array([[1.0, 2.0], [2.0, 1.0]])])


def random_setup(rng, sizes):
    part = BlockPartition(sizes)
    blocks = []
    for Ni in sizes:
        kind = rng.integers(3)
        if kind == 0:
            blocks.append(None)
        elif kind == 1:
            blocks.append(rng.uniform(0.5, 2, Ni))
        else:
            G = rng.standard_normal((Ni, Ni))
            blocks.append(G @ G.T + Ni * np.eye(Ni))
    return part, BlockMetric(part, blocks)


sizes_st = st.lists(st.integers(1, 4), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(sizes=sizes_st, seed=st.integers(0, 2**31))
def test_dense_round_trip(sizes, seed):
    rng = np.random.default_rng(seed)
    part, m = random_setup(rng, sizes)
    x = BlockVector(part, rng.standard_normal(part.N))
    back = metric_solve(m, metric_apply(m, x)).values
    assert np.allclose(back, x.values, rtol=1e-12, atol=1e-12 * np.abs(x.values).max())


@settings(max_examples=60, deadline=None)
@given(sizes=sizes_st, seed=st.integers(0, 2**31))
def test_parallelogram_expansion(sizes, seed):
    rng = np.random.default_rng(seed)
    part, m = random_setup(rng, sizes)
    w = rng.uniform(0.1, 5, part.n)
    x = BlockVector(part, rng.standard_normal(part.N))
    y = BlockVector(part, rng.standard_normal(part.N))
    lhs = weighted_norm_sq(x + y, w, m)
    rhs = weighted_norm_sq(x, w, m) + 2 * weighted_inner(metric_apply(m, x), y, w) \
        + weighted_norm_sq(y, w, m)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
    # definition consistency with the per-block norm
    per_block = sum(w[i] * block_norm_sq(x, i, m) for i in range(part.n))
    assert np.isclose(weighted_norm_sq(x, w, m), per_block, rtol=1e-12)
    assert weighted_norm_sq(x, w, m) > 0


@settings(max_examples=60, deadline=None)
@given(sizes=sizes_st, seed=st.integers(0, 2**31), data=st.data())
def test_restrict_properties(sizes, seed, data):
    rng = np.random.default_rng(seed)
    part = BlockPartition(sizes)
    h = BlockVector(part, rng.standard_normal(part.N))
    g = BlockVector(part, rng.standard_normal(part.N))
    blocks = list(range(part.n))
    S1 = data.draw(st.sets(st.sampled_from(blocks)))
    S2 = data.draw(st.sets(st.sampled_from(blocks)).map(lambda s: s - S1))
    r = restrict(h, S1)
    assert np.array_equal(restrict(r, S1).values, r.values)
    assert np.allclose(restrict(h + g, S1).values, (restrict(h, S1) + restrict(g, S1)).values)
    assert np.array_equal((restrict(h, S1) + restrict(h, S2)).values,
                          restrict(h, S1 | S2).values)
