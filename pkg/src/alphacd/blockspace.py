"""Block-partitioned vectors, per-block metrics and weighted norms.

A point of R^N = R^{N_1} x ... x R^{N_n} is stored as one contiguous array;
block ``i`` is the slice ``offsets[i]:offsets[i+1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

__all__ = [
    "RTOL",
    "BlockPartition",
    "BlockVector",
    "BlockMetric",
    "as_weights",
    "block_norm_sq",
    "weighted_norm_sq",
    "weighted_inner",
    "restrict",
    "scale_blocks",
    "metric_apply",
    "metric_solve",
]

#: Relative tolerance used for floating comparisons throughout the package.
RTOL = 1e-10


class BlockPartition:
    """Partition of ``N`` coordinates into ``n`` contiguous blocks.

    Parameters
    ----------
    sizes : sequence of int
        Block sizes ``N_1, ..., N_n``; all must be positive.
    """

    def __init__(self, sizes: Iterable[int]):
        sizes = np.asarray(list(sizes), dtype=np.int64)
        if sizes.ndim != 1 or sizes.size == 0:
            raise ValueError("a partition needs at least one block")
        if np.any(sizes < 1):
            raise ValueError("block sizes must be positive")
        self.sizes = sizes
        self.sizes.flags.writeable = False
        self.offsets = np.concatenate(([0], np.cumsum(sizes)))
        self.offsets.flags.writeable = False
        self.n = int(sizes.size)
        self.N = int(self.offsets[-1])
        # coordinate -> block lookup
        self.block_of = np.repeat(np.arange(self.n), sizes)
        self.block_of.flags.writeable = False

    @classmethod
    def scalar(cls, N: int) -> "BlockPartition":
        return cls(np.ones(N, dtype=np.int64))

    @classmethod
    def uniform(cls, n: int, size: int) -> "BlockPartition":
        return cls(np.full(n, size, dtype=np.int64))

    @property
    def is_scalar(self) -> bool:
        return self.n == self.N

    def slice(self, i: int) -> slice:
        if not 0 <= i < self.n:
            raise IndexError(f"block index {i} out of range for {self.n} blocks")
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def coords(self, blocks) -> np.ndarray:
        """Coordinate indices covered by ``blocks`` (in the given order)."""
        blocks = np.asarray(blocks, dtype=np.int64)
        if self.is_scalar:
            return blocks
        if blocks.size == 0:
            return blocks
        return np.concatenate(
            [np.arange(self.offsets[i], self.offsets[i + 1]) for i in blocks])

    def expand(self, w) -> np.ndarray:
        """Repeat a per-block array to per-coordinate length ``N``."""
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n,):
            raise ValueError(f"expected {self.n} block values, got shape {w.shape}")
        return w if self.is_scalar else np.repeat(w, self.sizes)

    def block_sums(self, values) -> np.ndarray:
        """Sum a per-coordinate array within each block."""
        values = np.asarray(values, dtype=float)
        if self.is_scalar:
            return values.copy()
        return np.add.reduceat(values, self.offsets[:-1])

    def __eq__(self, other):
        if not isinstance(other, BlockPartition):
            return NotImplemented
        return self is other or np.array_equal(self.sizes, other.sizes)

    def __hash__(self):
        return hash(self.sizes.tobytes())

    def __repr__(self):
        return f"BlockPartition(n={self.n}, N={self.N})"


@dataclass
class BlockVector:
    """A vector of R^N together with its block partition."""

    partition: BlockPartition
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.partition.N,):
            raise ValueError(
                f"values have shape {self.values.shape}, partition needs ({self.partition.N},)")

    @classmethod
    def zeros(cls, partition: BlockPartition) -> "BlockVector":
        return cls(partition, np.zeros(partition.N))

    def block(self, i: int) -> np.ndarray:
        return self.values[self.partition.slice(i)]

    def copy(self) -> "BlockVector":
        return BlockVector(self.partition, self.values.copy())

    def __add__(self, other: "BlockVector") -> "BlockVector":
        _check_same(self, other)
        return BlockVector(self.partition, self.values + other.values)

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        _check_same(self, other)
        return BlockVector(self.partition, self.values - other.values)


def _check_same(x: BlockVector, y: BlockVector):
    if x.partition != y.partition:
        raise ValueError("block vectors live on different partitions")


def _values(x, partition: BlockPartition | None = None) -> np.ndarray:
    if isinstance(x, BlockVector):
        return x.values
    return np.asarray(x, dtype=float)


def as_weights(w, n: int) -> np.ndarray:
    """Validate a positive weight vector of length ``n``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights must have length {n}, got shape {w.shape}")
    if not np.all(w > 0):
        raise ValueError("weights must be strictly positive")
    return w


class BlockMetric:
    """Per-block positive definite matrices ``B_i``.

    Each block is either the identity (``None``), a positive diagonal
    (1-D array) or a dense symmetric positive definite matrix (2-D array).
    Dense blocks are Cholesky-factorized once here.
    """

    def __init__(self, partition: BlockPartition, blocks: Sequence | None = None):
        self.partition = partition
        if blocks is None:
            blocks = [None] * partition.n
        if len(blocks) != partition.n:
            raise ValueError("one metric block per partition block is required")
        self._blocks = []
        self._factors = []
        for i, B in enumerate(blocks):
            Ni = int(partition.sizes[i])
            if B is None:
                self._blocks.append(None)
                self._factors.append(None)
                continue
            B = np.asarray(B, dtype=float)
            if B.ndim == 1:
                if B.shape != (Ni,) or not np.all(B > 0):
                    raise ValueError(f"diagonal metric block {i} must be positive of length {Ni}")
                self._blocks.append(B)
                self._factors.append(None)
            elif B.ndim == 2:
                if B.shape != (Ni, Ni) or not np.allclose(B, B.T, rtol=RTOL, atol=0):
                    raise ValueError(f"dense metric block {i} must be symmetric {Ni}x{Ni}")
                if np.linalg.eigvalsh(B)[0] <= 0:
                    raise ValueError(f"metric block {i} is not positive definite")
                self._blocks.append(B)
                self._factors.append(linalg.cho_factor(B))
            else:
                raise ValueError("metric blocks must be None, 1-D or 2-D")
        self.is_identity = all(B is None for B in self._blocks)
        self.is_diagonal = all(B is None or B.ndim == 1 for B in self._blocks)
        if self.is_diagonal:
            self.diag = np.concatenate([
                np.ones(int(partition.sizes[i])) if B is None else B
                for i, B in enumerate(self._blocks)])
        else:
            self.diag = None

    @classmethod
    def identity(cls, partition: BlockPartition) -> "BlockMetric":
        return cls(partition)

    def block_kind(self, i: int) -> str:
        B = self._blocks[i]
        if B is None:
            return "identity"
        return "diagonal" if B.ndim == 1 else "dense"

    def matrix(self, i: int) -> np.ndarray:
        Ni = int(self.partition.sizes[i])
        B = self._blocks[i]
        if B is None:
            return np.eye(Ni)
        return np.diag(B) if B.ndim == 1 else B.copy()

    def apply_block(self, i: int, xi: np.ndarray) -> np.ndarray:
        B = self._blocks[i]
        if B is None:
            return xi
        return B * xi if B.ndim == 1 else B @ xi

    def solve_block(self, i: int, xi: np.ndarray) -> np.ndarray:
        B = self._blocks[i]
        if B is None:
            return xi
        return xi / B if B.ndim == 1 else linalg.cho_solve(self._factors[i], xi)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return x
        if self.is_diagonal:
            return self.diag * x
        out = np.empty_like(x)
        for i in range(self.partition.n):
            s = self.partition.slice(i)
            out[s] = self.apply_block(i, x[s])
        return out

    def solve(self, x: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return x
        if self.is_diagonal:
            return x / self.diag
        out = np.empty_like(x)
        for i in range(self.partition.n):
            s = self.partition.slice(i)
            out[s] = self.solve_block(i, x[s])
        return out

    def block_quadratic(self, x: np.ndarray) -> np.ndarray:
        """Per-block values ``<B_i x^i, x^i>`` for a flat vector ``x``."""
        return self.partition.block_sums(self.apply(x) * x)


def block_norm_sq(x: BlockVector, i: int, m: BlockMetric) -> float:
    """``||x^i||_i^2 = <B_i x^i, x^i>``."""
    xi = x.block(i)
    return float(m.apply_block(i, xi) @ xi)


def weighted_norm_sq(x, w, m: BlockMetric) -> float:
    """``||x||_w^2 = sum_i w_i <B_i x^i, x^i>``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (m.partition.n,):
        raise ValueError(f"weights must have length {m.partition.n}")
    if isinstance(x, BlockVector) and x.partition != m.partition:
        raise ValueError("vector and metric live on different partitions")
    return float(w @ m.block_quadratic(_values(x)))


def weighted_inner(x: BlockVector, y: BlockVector, w) -> float:
    """``<x, y>_w = sum_i w_i <x^i, y^i>`` (plain inner product per block)."""
    _check_same(x, y)
    w = np.asarray(w, dtype=float)
    if w.shape != (x.partition.n,):
        raise ValueError(f"weights must have length {x.partition.n}")
    return float(w @ x.partition.block_sums(x.values * y.values))


def restrict(h: BlockVector, S) -> BlockVector:
    """``h_[S]``: keep the blocks in ``S``, zero the rest."""
    out = np.zeros_like(h.values)
    coords = h.partition.coords(np.fromiter(S, dtype=np.int64) if not
                                isinstance(S, np.ndarray) else S)
    out[coords] = h.values[coords]
    return BlockVector(h.partition, out)


def scale_blocks(v, x: BlockVector) -> BlockVector:
    """``v . x``: multiply block ``i`` of ``x`` by ``v_i``."""
    return BlockVector(x.partition, x.partition.expand(v) * x.values)


def metric_apply(m: BlockMetric, x: BlockVector) -> BlockVector:
    return BlockVector(x.partition, m.apply(x.values))


def metric_solve(m: BlockMetric, x: BlockVector) -> BlockVector:
    return BlockVector(x.partition, m.solve(x.values))
