"""Smooth part ``f(x) = sum_j phi_j((A x)_j)``.

The matrix is kept twice: as a CSR matrix for full products, and in a
column-block layout where block ``i`` stores the rows ``I_i`` meeting it and
the dense sub-block ``A[I_i, block i]``.  Block gradients then read only
those rows, which is what makes cheap coordinate updates possible.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg, sparse

from .blockspace import BlockMetric, BlockPartition

__all__ = [
    "SquareLoss",
    "LogisticLoss",
    "TouchCounter",
    "SmoothObjective",
    "power_iteration",
]


class SquareLoss:
    """``phi_j(t) = (t - b_j)^2 / 2``."""

    name = "quadratic"
    smoothness = 1.0

    def __init__(self, targets):
        self.b = np.asarray(targets, dtype=float)

    def value(self, t):
        d = t - self.b
        return 0.5 * float(d @ d)

    def derivative(self, t, rows=None):
        return t - (self.b if rows is None else self.b[rows])


class LogisticLoss:
    """``phi_j(t) = log(1 + exp(-b_j t))`` with labels ``b_j`` in {-1, +1}."""

    name = "logistic"
    smoothness = 0.25

    def __init__(self, labels):
        b = np.asarray(labels, dtype=float)
        if not np.all(np.isin(b, (-1.0, 1.0))):
            raise ValueError("logistic labels must be -1 or +1")
        self.b = b

    def value(self, t):
        return float(np.logaddexp(0.0, -self.b * t).sum())

    def derivative(self, t, rows=None):
        b = self.b if rows is None else self.b[rows]
        # -b * sigmoid(-b t), written to avoid overflow
        return -b * np.exp(-np.logaddexp(0.0, b * t))


class TouchCounter:
    """Counts matrix entries read by block gradient evaluations."""

    def __init__(self):
        self.count = 0


def power_iteration(matvec, dim, *, max_iter=200, rtol=1e-10, seed=0):
    """Largest eigenvalue of a symmetric positive semidefinite operator.

    Stops after ``max_iter`` products or when the Rayleigh quotient changes by
    less than ``rtol`` relatively.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    x = rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = matvec(x)
        new = float(x @ y)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        if abs(new - lam) <= rtol * abs(new):
            return new
        lam = new
    return lam


class SmoothObjective:
    """Partially separable smooth function over a block partition.

    Parameters
    ----------
    A : array_like or sparse matrix, shape (m, N)
    loss : SquareLoss or LogisticLoss
        Applied row-wise to ``A x``.
    partition : BlockPartition, optional
        Defaults to ``N`` scalar blocks.
    metric : BlockMetric, optional
        Defaults to the identity.
    """

    def __init__(self, A, loss, partition: BlockPartition | None = None,
                 metric: BlockMetric | None = None):
        A = sparse.csc_matrix(A, dtype=float)
        A.eliminate_zeros()
        A.sort_indices()
        self.m, self.N = A.shape
        self.partition = partition or BlockPartition.scalar(self.N)
        if self.partition.N != self.N:
            raise ValueError(f"partition covers {self.partition.N} coordinates, A has {self.N} columns")
        self.metric = metric or BlockMetric.identity(self.partition)
        if self.metric.partition != self.partition:
            raise ValueError("metric and partition disagree")
        if loss.b.shape != (self.m,):
            raise ValueError(f"loss has {loss.b.size} targets, A has {self.m} rows")
        col_nnz = np.diff(A.indptr)
        if np.any(col_nnz == 0):
            raise ValueError(f"A has all-zero columns {np.flatnonzero(col_nnz == 0).tolist()}")
        self.loss = loss
        self.gamma = loss.smoothness
        self.A = A.tocsr()
        self.AT = A.T.tocsr()
        self.nnz = int(A.nnz)

        self.rows = []
        self.blocks = []
        for i in range(self.partition.n):
            sub = A[:, self.partition.slice(i)]
            rows = np.unique(sub.indices)
            self.rows.append(rows)
            self.blocks.append(sub[rows, :].toarray())
        # |I_i| * N_i: entries touched by one block gradient or residual update
        self.block_nnz = np.array([b.size for b in self.blocks], dtype=np.int64)
        self._csc = (A.indptr, A.indices, A.data)

    @property
    def n(self):
        return self.partition.n

    @property
    def is_quadratic(self):
        return isinstance(self.loss, SquareLoss)

    def residual(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def value(self, x) -> float:
        return self.loss.value(self.residual(x))

    def value_from_residual(self, r) -> float:
        return self.loss.value(r)

    def gradient(self, x) -> np.ndarray:
        return self.gradient_from_residual(self.residual(x))

    def gradient_from_residual(self, r) -> np.ndarray:
        return self.AT @ self.loss.derivative(r)

    def block_gradient(self, i, r, counter: TouchCounter | None = None) -> np.ndarray:
        """``grad_i f`` from the residual ``r = A y`` of the query point.

        ``r`` must be current; a stale residual silently gives a wrong
        gradient.  Only the rows ``I_i`` of ``r`` are read.
        """
        return self.block_gradient_rows(i, r[self.rows[i]], counter)

    def block_gradient_rows(self, i, r_rows, counter: TouchCounter | None = None):
        """Block gradient from the residual restricted to ``I_i``."""
        if counter is not None:
            counter.count += int(self.block_nnz[i])
        return self.blocks[i].T @ self.loss.derivative(r_rows, self.rows[i])

    def sampled_columns(self, S):
        """Stored entries of the scalar blocks (columns) ``S``.

        Returns ``(rows, vals, owner)`` where ``owner[e]`` is the position in
        ``S`` of the column that entry ``e`` belongs to.  Only the gathered
        entries are read.
        """
        indptr, indices, data = self._csc
        start = indptr[S]
        counts = indptr[S + 1] - start
        owner = np.repeat(np.arange(S.size), counts)
        pos = np.arange(owner.size) + np.repeat(start - (np.cumsum(counts) - counts), counts)
        return indices[pos], data[pos], owner

    def sampled_gradient(self, S, r_rows, rows, vals, owner, counter: TouchCounter | None = None):
        """Gradients of the scalar blocks ``S`` from the residual at ``rows``."""
        if counter is not None:
            counter.count += int(rows.size)
        return np.bincount(owner, vals * self.loss.derivative(r_rows, rows), minlength=S.size)

    def add_block_product(self, r, i, t, scale=1.0):
        """In place ``r += scale * A U_i t``."""
        r[self.rows[i]] += scale * (self.blocks[i] @ t)

    def weighted_gram_block(self, i) -> np.ndarray:
        """``sum_j gamma_j A_ji^T A_ji``."""
        Ai = self.blocks[i]
        return self.gamma * (Ai.T @ Ai)

    def block_lipschitz_constants(self) -> np.ndarray:
        """``L_i`` such that ``f(x + U_i h) <= f(x) + <grad_i f, h> + L_i/2 ||h||_i^2``."""
        L = np.empty(self.n)
        for i in range(self.n):
            G = self.weighted_gram_block(i)
            kind = self.metric.block_kind(i)
            if G.shape == (1, 1):
                L[i] = G[0, 0] / self.metric.matrix(i)[0, 0]
            elif kind == "identity":
                L[i] = np.linalg.eigvalsh(G)[-1]
            else:
                L[i] = linalg.eigh(G, self.metric.matrix(i), eigvals_only=True)[-1]
        return L

    def _normal_matvec(self, x):
        # B^{-1/2} A^T Gamma A B^{-1/2}, B applied through its block solves
        return self._scaled(self.AT @ (self.gamma * (self.A @ self._scaled(x))))

    def _scaled(self, x):
        if self.metric.is_identity:
            return x
        if self.metric.is_diagonal:
            return x / np.sqrt(self.metric.diag)
        out = np.empty_like(x)
        for i in range(self.n):
            s = self.partition.slice(i)
            w, V = np.linalg.eigh(self.metric.matrix(i))
            out[s] = V @ ((V.T @ x[s]) / np.sqrt(w))
        return out

    def lambda_max(self, **kwargs) -> float:
        """Largest eigenvalue of the metric-scaled normal matrix, by power iteration."""
        return power_iteration(self._normal_matvec, self.N, **kwargs)

    def global_lipschitz_weights(self, method: str = "bound", safety: float = 1.01) -> np.ndarray:
        """Weights ``v`` with ``f(x + h) <= f(x) + <grad f(x), h> + ||h||_v^2 / 2``.

        ``method="bound"`` uses ``sum_j gamma_j ||a_j||^2_{B^-1}`` (always
        safe), ``"power"`` uses power iteration inflated by ``safety`` and
        ``"exact"`` a dense symmetric eigensolve (small problems only).
        """
        if method == "bound":
            rows_sq = np.zeros(self.m)
            for i in range(self.n):
                Ai = self.blocks[i]
                Binv = np.linalg.inv(self.metric.matrix(i))
                rows_sq[self.rows[i]] += np.einsum("jk,kl,jl->j", Ai, Binv, Ai)
            total = self.gamma * rows_sq.sum()
        elif method == "power":
            total = self.lambda_max() * safety
        elif method == "exact":
            H = self.hessian_bound_matrix()
            S = np.column_stack([self._scaled(c) for c in np.eye(self.N)])
            total = float(np.linalg.eigvalsh(S.T @ H @ S)[-1])
        else:
            raise ValueError(f"unknown method {method!r}")
        return np.full(self.n, float(total))

    def hessian_bound_matrix(self) -> np.ndarray:
        """Dense ``A^T Gamma A``; the Hessian itself for square losses."""
        Ad = self.A.toarray()
        return self.gamma * (Ad.T @ Ad)
