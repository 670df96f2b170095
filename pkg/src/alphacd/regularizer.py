"""Block-separable regularizers with closed-form block prox steps.

The block subproblem solved by :meth:`Regularizer.prox_step` is::

    argmin_z  <g, z> + (tau / 2) ||z - z0||_i^2 + psi^i(z)

Supported block kinds:

``zero``   psi^i = 0
``l1``     lam_i * ||z||_1  (scalar blocks, identity metric)
``sq_l2``  (lam_i / 2) * ||z||_2^2
``box``    indicator of [lo_i, hi_i] per coordinate (diagonal metric)
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .blockspace import BlockMetric, BlockPartition

__all__ = ["KINDS", "Regularizer", "soft_threshold", "gradient_step"]

KINDS = ("zero", "l1", "sq_l2", "box")


def soft_threshold(u, t):
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


def gradient_step(z, Binv_g, tau):
    """``z - B^{-1} g / tau``: the unregularized block minimizer."""
    return z - Binv_g / tau


def _per_block(value, n, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    if np.any(np.isnan(arr)):
        raise ValueError(f"{name} must not be NaN")
    return arr


class Regularizer:
    """``psi(x) = sum_i psi^i(x^i)``.

    Parameters
    ----------
    partition : BlockPartition
    kinds : str or sequence of str
        One kind for all blocks, or one per block.
    lam : float or array of length n
        Weight for ``l1`` and ``sq_l2`` blocks.
    lo, hi : float or array of length n
        Bounds for ``box`` blocks.
    """

    def __init__(self, partition: BlockPartition, kinds="zero", lam=0.0,
                 lo=-np.inf, hi=np.inf):
        n = partition.n
        self.partition = partition
        if isinstance(kinds, str):
            kinds = [kinds] * n
        kinds = list(kinds)
        if len(kinds) != n:
            raise ValueError(f"need {n} block kinds, got {len(kinds)}")
        unknown = set(kinds) - set(KINDS)
        if unknown:
            raise ValueError(f"unknown regularizer kinds {sorted(unknown)}")
        self.kinds = kinds
        self.lam = _per_block(lam, n, "lambda")
        self.lo = _per_block(lo, n, "lo")
        self.hi = _per_block(hi, n, "hi")
        if np.any(self.lam < 0):
            raise ValueError("lambda must be nonnegative")
        if np.any(self.lo > self.hi):
            raise ValueError("box bounds need lo <= hi")
        for i, kind in enumerate(kinds):
            if kind == "l1" and partition.sizes[i] != 1:
                raise ValueError(f"l1 needs scalar blocks; block {i} has size {partition.sizes[i]}")

        kinds_arr = np.array(kinds)
        self._kind_coord = np.repeat(kinds_arr, partition.sizes)
        self._lam_coord = partition.expand(self.lam)
        self._lo_coord = partition.expand(self.lo)
        self._hi_coord = partition.expand(self.hi)
        self.uniform_kind = kinds[0] if len(set(kinds)) == 1 else None

    @classmethod
    def zero(cls, partition):
        return cls(partition, "zero")

    @classmethod
    def l1(cls, partition, lam):
        return cls(partition, "l1", lam=lam)

    @classmethod
    def sq_l2(cls, partition, lam):
        return cls(partition, "sq_l2", lam=lam)

    @classmethod
    def box(cls, partition, lo, hi):
        return cls(partition, "box", lo=lo, hi=hi)

    @property
    def is_zero(self):
        return self.uniform_kind == "zero"

    def check_metric(self, metric: BlockMetric):
        """Reject block kinds whose prox has no closed form under ``metric``."""
        for i, kind in enumerate(self.kinds):
            mk = metric.block_kind(i)
            if kind == "l1" and mk != "identity":
                raise ValueError(f"l1 block {i} needs the identity metric, got {mk}")
            if kind == "box" and mk == "dense":
                raise ValueError(f"box block {i} needs a diagonal metric")

    def block_value(self, i, xi) -> float:
        kind = self.kinds[i]
        if kind == "zero":
            return 0.0
        if kind == "l1":
            return float(self.lam[i] * np.abs(xi).sum())
        if kind == "sq_l2":
            return float(0.5 * self.lam[i] * (xi @ xi))
        inside = np.all((xi >= self.lo[i]) & (xi <= self.hi[i]))
        return 0.0 if inside else np.inf

    def value(self, x) -> float:
        x = getattr(x, "values", x)
        if self.uniform_kind == "zero":
            return 0.0
        if self.uniform_kind == "l1":
            return float(self._lam_coord @ np.abs(x))
        if self.uniform_kind == "sq_l2":
            return float(0.5 * (self._lam_coord @ (x * x)))
        return float(sum(self.block_value(i, x[self.partition.slice(i)])
                         for i in range(self.partition.n)))

    def in_domain(self, x) -> bool:
        x = getattr(x, "values", x)
        box = self._kind_coord == "box"
        return bool(np.all((x[box] >= self._lo_coord[box]) & (x[box] <= self._hi_coord[box])))

    def prox_step(self, i, g, z, tau, metric: BlockMetric) -> np.ndarray:
        """Exact minimizer of the block-``i`` subproblem."""
        if not tau > 0:
            raise ValueError("tau must be positive")
        kind = self.kinds[i]
        mk = metric.block_kind(i)
        if kind == "zero":
            return gradient_step(z, metric.solve_block(i, g), tau)
        if kind == "l1":
            if mk != "identity":
                raise ValueError("l1 prox needs the identity metric")
            return soft_threshold(z - g / tau, self.lam[i] / tau)
        if kind == "sq_l2":
            if mk == "dense":
                B = metric.matrix(i)
                lhs = tau * B + self.lam[i] * np.eye(B.shape[0])
                return linalg.solve(lhs, tau * (B @ z) - g, assume_a="pos")
            d = 1.0 if mk == "identity" else metric.matrix(i).diagonal()
            return (tau * d * z - g) / (tau * d + self.lam[i])
        if mk == "dense":
            raise ValueError("box prox needs a diagonal metric")
        return np.clip(gradient_step(z, metric.solve_block(i, g), tau), self.lo[i], self.hi[i])

    def prox_coords(self, coords, g, z, tau, metric: BlockMetric) -> np.ndarray:
        """Vectorized prox over whole blocks listed coordinate-wise.

        ``coords`` must cover complete blocks; ``g``, ``z`` and ``tau`` are
        given per coordinate.  Requires a diagonal metric.
        """
        if not metric.is_diagonal:
            raise ValueError("vectorized prox needs a diagonal metric")
        d = None if metric.is_identity else metric.diag[coords]
        Binv_g = g if d is None else g / d
        kind = self.uniform_kind
        if d is not None and (kind == "l1" or (kind is None and np.any(self._kind_coord[coords] == "l1"))):
            raise ValueError("l1 prox needs the identity metric")
        if kind == "zero":
            return gradient_step(z, Binv_g, tau)
        if kind == "l1":
            return soft_threshold(z - g / tau, self._lam_coord[coords] / tau)
        if kind == "sq_l2":
            dd = 1.0 if d is None else d
            return (tau * dd * z - g) / (tau * dd + self._lam_coord[coords])
        if kind == "box":
            return np.clip(gradient_step(z, Binv_g, tau),
                           self._lo_coord[coords], self._hi_coord[coords])
        # mixed kinds: evaluate each formula on its own coordinates
        tau = np.broadcast_to(tau, np.shape(z))
        dd = np.ones_like(z) if d is None else d
        kinds = self._kind_coord[coords]
        out = gradient_step(z, Binv_g, tau)
        m = kinds == "l1"
        out[m] = soft_threshold(z[m] - g[m] / tau[m], self._lam_coord[coords][m] / tau[m])
        m = kinds == "sq_l2"
        out[m] = (tau[m] * dd[m] * z[m] - g[m]) / (tau[m] * dd[m] + self._lam_coord[coords][m])
        m = kinds == "box"
        out[m] = np.clip(out[m], self._lo_coord[coords][m], self._hi_coord[coords][m])
        return out
