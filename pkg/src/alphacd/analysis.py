"""Closed-form convergence bounds and the gamma-coefficient diagnostic.

All bounds are functions of the constant::

    C = (1 - theta0) (F(x0) - F(y)) + theta0^2 / 2 * ||x0 - y||^2_{v o p^-2}

and decrease like ``1/k`` (constant ``theta``) or ``1/k^2`` (accelerated
``theta``).  ``k`` may be an integer or an array of iteration counters.
"""

from __future__ import annotations

import numpy as np

from .blockspace import BlockMetric, BlockPartition, weighted_norm_sq
from .regularizer import Regularizer
from .solver import Problem, Snapshot, preset, run

__all__ = [
    "bound_constant",
    "bound_nonaccelerated",
    "bound_accelerated",
    "corollary_bound",
    "theorem_bounds",
    "GammaTable",
    "gamma_step",
    "reconstruct_x",
    "psi_hat",
    "reference_solution",
]

COROLLARIES = ("gd", "agd", "pcd", "apcd", "prox_gd", "acc_prox_gd", "pcdm", "approxis")


def _metric_for(x, v, metric):
    if metric is not None:
        return metric
    v = np.asarray(v)
    if np.size(x) != v.size:
        raise ValueError("non-scalar blocks need an explicit metric")
    return BlockMetric.identity(BlockPartition.scalar(v.size))


def _dist(x0, y, w, metric):
    d = np.asarray(x0, dtype=float) - np.asarray(y, dtype=float)
    return weighted_norm_sq(d, w, _metric_for(d, w, metric))


def bound_constant(x0, y, F0, Fy, v, p, theta0, metric: BlockMetric | None = None) -> float:
    """``C`` for the reference point ``y`` (``F0 = F(x0)``, ``Fy = F(y)``)."""
    if not 0 < theta0 <= 1:
        raise ValueError(f"theta0 must lie in (0, 1], got {theta0}")
    v = np.asarray(v, dtype=float)
    p = np.asarray(p, dtype=float)
    return (1 - theta0) * (F0 - Fy) + 0.5 * theta0 ** 2 * _dist(x0, y, v / p ** 2, metric)


def _check_k(k):
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise ValueError("bounds are stated for k >= 1")
    return k


def bound_nonaccelerated(C, theta0, k):
    """``C / ((k - 1) theta0 + 1)``."""
    k = _check_k(k)
    return C / ((k - 1) * theta0 + 1)


def bound_accelerated(C, theta0, k):
    """``4 C / ((k - 1) theta0 + 2)^2``; meaningful for ``C >= 0``."""
    k = _check_k(k)
    return 4 * C / ((k - 1) * theta0 + 2) ** 2


def corollary_bound(name, k, x0, xstar, v, p=None, F0=None, Fstar=None,
                    metric: BlockMetric | None = None):
    """Closed-form bound of a named special case.

    Parameters
    ----------
    name : str
        One of ``COROLLARIES``.
    k : int or array
    x0, xstar : array
        Starting point and a minimizer.
    v : array
        ESO weights used by the run.
    p : array, optional
        Inclusion probabilities; ignored by the full-sampling methods.
    F0, Fstar : float, optional
        ``F(x0)`` and ``F(x*)``; required by pcd, pcdm and approxis.

    Notes
    -----
    For the serial uniform sampling the pcd bound equals
    ``n / (k - 1 + n) [(1 - 1/n) (f0 - f*) + ||x0 - x*||_v^2 / 2]`` and the
    apcd bound equals ``2 n^2 ||x0 - x*||_v^2 / (k + 1)^2``.  The pcdm bound
    is the pcd formula with ``min p = tau / n``.
    """
    if name not in COROLLARIES:
        raise ValueError(f"unknown preset {name!r}; choose from {list(COROLLARIES)}")
    k = _check_k(k)
    v = np.asarray(v, dtype=float)
    if name in ("gd", "prox_gd"):
        return _dist(x0, xstar, v, metric) / (2 * k)
    if name in ("agd", "acc_prox_gd"):
        return 2 * _dist(x0, xstar, v, metric) / (k + 1) ** 2
    if p is None:
        raise ValueError(f"{name} bound needs the inclusion probabilities")
    p = np.asarray(p, dtype=float)
    pmin = float(p.min())
    if name == "apcd":
        return 2 * _dist(x0, xstar, v / p ** 2, metric) / (k + 1) ** 2
    if F0 is None or Fstar is None:
        raise ValueError(f"{name} bound needs F(x0) and F(x*)")
    gap = F0 - Fstar
    if name in ("pcd", "pcdm"):
        return ((1 - pmin) * gap + 0.5 * _dist(x0, xstar, v, metric)) / ((k - 1) * pmin + 1)
    # approxis
    num = (1 - pmin) * gap + 0.5 * pmin ** 2 * _dist(x0, xstar, v / p ** 2, metric)
    return 4 * num / ((k - 1) * pmin + 2) ** 2


def theorem_bounds(problem: Problem, config, k, x0, xstar, Fstar=None):
    """Both theorem bounds for a configuration, with ``y = x*``.

    Returns ``(nonaccelerated, accelerated)`` arrays over ``k``.
    """
    x0 = np.zeros(problem.objective.N) if x0 is None else np.asarray(x0, dtype=float)
    Fstar = problem.value(xstar) if Fstar is None else Fstar
    theta0 = config.schedule.theta0
    C = bound_constant(x0, xstar, problem.value(x0), Fstar, config.v, config.p, theta0,
                       problem.objective.metric)
    return bound_nonaccelerated(C, theta0, k), bound_accelerated(C, theta0, k)


class GammaTable:
    """Coefficients with ``x_k^i = sum_{l<=k} gamma_{k,l}^i z_l^i``.

    Stored densely as an ``n x (k+1)`` array; only meant for short
    diagnostic runs.  Pass :meth:`observe` as a solver callback to record
    the ``z`` history alongside the coefficients.
    """

    def __init__(self, p, cap: int = 200):
        self.p = np.asarray(p, dtype=float)
        self.cap = cap
        self.gamma = np.ones((self.p.size, 1))
        self.zs = []

    @property
    def k(self) -> int:
        return self.gamma.shape[1] - 1

    def step(self, theta: float):
        if self.k >= self.cap:
            raise RuntimeError(f"gamma diagnostics are capped at k = {self.cap}")
        g = self.gamma
        new = np.empty((g.shape[0], g.shape[1] + 1))
        new[:, :-2] = (1 - theta) * g[:, :-1]
        new[:, -2] = (1 - theta) * g[:, -1] + theta - theta / self.p
        new[:, -1] = theta / self.p
        self.gamma = new
        return self

    def observe(self, snap: Snapshot):
        if snap.k == 0:
            self.gamma = np.ones((self.p.size, 1))
            self.zs = [snap.z.copy()]
            return
        self.step(snap.theta)
        self.zs.append(snap.z.copy())

    def row_sums(self) -> np.ndarray:
        return self.gamma.sum(axis=1)


def gamma_step(table: GammaTable, theta: float) -> GammaTable:
    """Advance the coefficients from ``k`` to ``k + 1`` using ``theta_k``."""
    return table.step(theta)


def _history(table, zs):
    zs = table.zs if zs is None else zs
    if len(zs) != table.k + 1:
        raise ValueError(f"need z_0..z_{table.k}, got {len(zs)} iterates")
    return np.asarray(zs, dtype=float)


def reconstruct_x(table: GammaTable, partition: BlockPartition, zs=None) -> np.ndarray:
    """``x_k`` rebuilt from the coefficients and the ``z`` history."""
    Z = _history(table, zs)
    coef = np.repeat(table.gamma, partition.sizes, axis=0)     # N x (k+1)
    return np.einsum("jl,lj->j", coef, Z)


def psi_hat(table: GammaTable, reg: Regularizer, zs=None) -> float:
    """``sum_i sum_l gamma_{k,l}^i psi^i(z_l^i)``, an upper bound on ``psi(x_k)``."""
    Z = _history(table, zs)
    part = reg.partition
    total = 0.0
    for i in range(part.n):
        sl = part.slice(i)
        for l, z in enumerate(Z):
            c = table.gamma[i, l]
            if c != 0.0:
                total += c * reg.block_value(i, z[sl])
    return float(total)


def reference_solution(problem: Problem, iters: int = 100_000, x0=None):
    """High-accuracy minimizer ``(x*, F*)``.

    Square loss without regularizer: least squares.  Otherwise an
    accelerated proximal gradient run of ``iters`` steps, with the step
    taken from the power-iteration estimate of the Lipschitz constant.
    """
    obj = problem.objective
    if obj.is_quadratic and problem.regularizer.is_zero:
        xstar = np.linalg.lstsq(obj.A.toarray(), obj.loss.b, rcond=None)[0]
    else:
        v = obj.global_lipschitz_weights("power")
        config = preset("acc_prox_gd", problem, v=v, iters=iters, evaluate=False,
                        log_stride=iters or 1)
        xstar = run(problem, config, x0).x
    return xstar, problem.value(xstar)
