import numpy as np
import pytest
from scipy import sparse

from alphacd.objective import SmoothObjective, SquareLoss
from alphacd.regularizer import Regularizer
from alphacd.solver import Problem


def random_sparse(m, N, density, seed):
    """Random sparse matrix with at least one entry per column."""
    rng = np.random.default_rng(seed)
    A = sparse.random(m, N, density=density, random_state=rng, format="lil",
                      data_rvs=rng.standard_normal)
    for j in range(N):
        if A[:, j].nnz == 0:
            A[rng.integers(m), j] = rng.standard_normal()
    return A.tocsr()


def quadratic_instance(m=40, N=20, density=0.3, seed=0):
    rng = np.random.default_rng(seed + 1000)
    A = random_sparse(m, N, density, seed)
    return Problem(SmoothObjective(A, SquareLoss(rng.standard_normal(m))))


def lasso_instance(m=50, N=20, lam=0.1, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, N))
    b = rng.standard_normal(m)
    obj = SmoothObjective(A, SquareLoss(b))
    return Problem(obj, Regularizer.l1(obj.partition, lam))


@pytest.fixture
def quad():
    return quadratic_instance()


@pytest.fixture
def lasso():
    return lasso_instance()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
