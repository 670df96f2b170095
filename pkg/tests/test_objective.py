import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from alphacd.blockspace import BlockMetric, BlockPartition
from alphacd.objective import (LogisticLoss, SmoothObjective, SquareLoss, TouchCounter,
                               power_iteration)

from conftest import random_sparse


def make(seed, logistic=False, blocky=False):
    rng = np.random.default_rng(seed)
    m, N = int(rng.integers(5, 30)), 12
    A = random_sparse(m, N, 0.3, seed)
    loss = LogisticLoss(rng.choice([-1.0, 1.0], m)) if logistic else SquareLoss(rng.standard_normal(m))
    if not blocky:
        return SmoothObjective(A, loss)
    part = BlockPartition([3, 1, 2, 4, 2])
    blocks = [None, np.array([2.0]), rng.uniform(0.5, 2, 2), None, None]
    G = rng.standard_normal((4, 4))
    blocks[3] = G @ G.T + np.eye(4)
    return SmoothObjective(A, loss, part, BlockMetric(part, blocks))


def test_value_examples():
    obj = SmoothObjective(np.eye(2), SquareLoss(np.zeros(2)))
    assert obj.value(np.array([1.0, 1.0])) == 1.0
    b = np.array([1.0, -2.0, 3.0])
    obj = SmoothObjective(np.ones((3, 1)), SquareLoss(b))
    assert obj.value(np.zeros(1)) == 0.5 * b @ b
    obj = SmoothObjective(np.ones((1, 1)), LogisticLoss([1.0]))
    assert np.isclose(obj.value(np.zeros(1)), np.log(2), rtol=1e-15)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        SmoothObjective(np.array([[1.0, 0.0]]), SquareLoss([1.0]))     # zero column
    with pytest.raises(ValueError):
        SmoothObjective(np.eye(2), SquareLoss([1.0]))
    with pytest.raises(ValueError):
        LogisticLoss([1.0, 0.5])


def test_block_gradient_examples():
    obj = SmoothObjective(np.eye(3), SquareLoss(np.zeros(3)))
    x = np.array([1.0, -2.0, 3.0])
    r = obj.residual(x)
    assert [obj.block_gradient(i, r)[0] for i in range(3)] == x.tolist()


def test_gradient_zero_at_minimizer():
    obj = make(4)
    Ad = obj.A.toarray()
    xs = np.linalg.lstsq(Ad, obj.loss.b, rcond=None)[0]
    r = obj.residual(xs)
    g = np.concatenate([obj.block_gradient(i, r) for i in range(obj.n)])
    assert np.abs(g).max() <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), logistic=st.booleans(), blocky=st.booleans())
def test_gradient_finite_differences(seed, logistic, blocky):
    obj = make(seed, logistic, blocky)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(obj.N)
    r = obj.residual(x)
    eps = 1e-5
    fd = np.array([(obj.value(x + eps * e) - obj.value(x - eps * e)) / (2 * eps)
                   for e in np.eye(obj.N)])
    g = np.concatenate([obj.block_gradient(i, r) for i in range(obj.n)])
    assert np.allclose(g, obj.gradient(x), rtol=1e-12, atol=1e-12)
    for i in range(obj.n):
        sl = obj.partition.slice(i)
        err = np.linalg.norm(g[sl] - fd[sl]) / max(1.0, np.linalg.norm(g[sl]))
        assert err <= 1e-6


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), logistic=st.booleans())
def test_convexity(seed, logistic):
    obj = make(seed, logistic)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, obj.N)) * 3
    assert obj.value(0.5 * x + 0.5 * y) <= 0.5 * obj.value(x) + 0.5 * obj.value(y) + 1e-12


def test_lipschitz_examples():
    obj = SmoothObjective(np.diag([1.0, 2.0]), SquareLoss(np.zeros(2)))
    assert np.allclose(obj.block_lipschitz_constants(), [1, 4])
    assert np.allclose(obj.global_lipschitz_weights("exact"), [4, 4])
    assert np.all(obj.global_lipschitz_weights("bound") >= 4)
    obj = SmoothObjective(np.array([[2.0, 1.0]]), LogisticLoss([1.0]))
    assert np.isclose(obj.block_lipschitz_constants()[0], 1.0)


def test_power_iteration_identity():
    obj = SmoothObjective(np.eye(5), SquareLoss(np.zeros(5)))
    assert abs(obj.lambda_max() - 1) <= 1e-8
    # v = 1 suffices; the row-norm bound is safe but looser (trace of A^T A)
    assert np.allclose(obj.global_lipschitz_weights("power"), 1.01)
    assert np.allclose(obj.global_lipschitz_weights("bound"), 5)
    rng = np.random.default_rng(0)
    G = rng.standard_normal((6, 6))
    M = G @ G.T
    assert np.isclose(power_iteration(lambda v: M @ v, 6, max_iter=5000),
                      np.linalg.eigvalsh(M)[-1], rtol=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), logistic=st.booleans(), blocky=st.booleans())
def test_bound_ordering(seed, logistic, blocky):
    obj = make(seed, logistic, blocky)
    exact = obj.global_lipschitz_weights("exact")[0]
    power = obj.lambda_max(max_iter=2000)
    bound = obj.global_lipschitz_weights("bound")[0]
    assert power <= exact * (1 + 1e-9)
    assert exact <= bound * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), logistic=st.booleans(), blocky=st.booleans())
def test_block_lipschitz_inequality(seed, logistic, blocky):
    obj = make(seed, logistic, blocky)
    L = obj.block_lipschitz_constants()
    rng = np.random.default_rng(seed)
    for _ in range(1000 // 20):
        x = rng.standard_normal(obj.N)
        i = int(rng.integers(obj.n))
        sl = obj.partition.slice(i)
        h = rng.standard_normal(sl.stop - sl.start)
        xh = x.copy()
        xh[sl] += h
        g = obj.block_gradient(i, obj.residual(x))
        rhs = obj.value(x) + g @ h + 0.5 * L[i] * (obj.metric.apply_block(i, h) @ h)
        assert obj.value(xh) <= rhs + 1e-10 * max(1.0, abs(rhs))


def test_touch_counter_reads_only_block_rows():
    A = sparse.csr_matrix(np.array([[1.0, 0, 2], [0, 3, 0], [4, 0, 0], [0, 0, 5]]))
    obj = SmoothObjective(A, SquareLoss(np.zeros(4)))
    assert [r.tolist() for r in obj.rows] == [[0, 2], [1], [0, 3]]
    c = TouchCounter()
    r = np.full(4, np.nan)
    r[[0, 2]] = [1.0, 2.0]
    g = obj.block_gradient(0, r, c)       # NaNs elsewhere are never read
    assert c.count == 2 and g.tolist() == [1.0 + 8.0]
    obj.block_gradient(1, np.ones(4), c)
    assert c.count == 3


def test_add_block_product():
    obj = make(3, blocky=True)
    rng = np.random.default_rng(1)
    x = rng.standard_normal(obj.N)
    r = obj.residual(x)
    t = rng.standard_normal(4)
    obj.add_block_product(r, 3, t, 0.5)
    x[obj.partition.slice(3)] += 0.5 * t
    assert np.allclose(r, obj.residual(x), atol=1e-12)
