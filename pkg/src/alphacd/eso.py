"""ESO parameters: assignment for serial and full samplings, certification
of user-supplied values, and the optimal serial importance sampling.

``(f, S) ~ ESO(v)`` means that for all ``x, h``::

    E f(x + h_[S]) <= f(x) + <grad f(x), h>_p + ||h||^2_{v o p} / 2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objective import SmoothObjective
from .sampling import AtomCapExceeded, Sampling, make_rng, pairwise_inclusion_matrix

__all__ = [
    "CERT_TOL",
    "EsoCertificate",
    "serial_eso",
    "full_eso",
    "certify_quadratic",
    "falsify_monte_carlo",
    "optimal_serial_probabilities",
]

#: Smallest eigenvalue accepted as nonnegative by :func:`certify_quadratic`.
CERT_TOL = -1e-10


@dataclass(frozen=True)
class EsoCertificate:
    v: np.ndarray
    method: str            # serial_exact | full_exact | user_supplied
    certification: str     # quadratic_psd | monte_carlo | none
    value: float | None = None
    trials: int | None = None

    @property
    def ok(self) -> bool:
        if self.certification == "quadratic_psd":
            return self.value >= CERT_TOL
        if self.certification == "monte_carlo":
            return self.value <= 1e-10
        return True


def serial_eso(obj: SmoothObjective) -> np.ndarray:
    """Block Lipschitz constants; valid for every serial sampling."""
    return obj.block_lipschitz_constants()


def full_eso(obj: SmoothObjective, method: str = "bound") -> np.ndarray:
    """``v`` for the sampling that always picks every block."""
    return obj.global_lipschitz_weights(method=method)


def _coordinate_inclusion(obj: SmoothObjective, s: Sampling, cap=None) -> np.ndarray:
    P = pairwise_inclusion_matrix(s, cap)
    b = obj.partition.block_of
    return P[np.ix_(b, b)]


def certify_quadratic(obj: SmoothObjective, s: Sampling, v, cap=None) -> float:
    """Smallest eigenvalue of ``D - P o M`` for a quadratic ``f``.

    ``M`` is the Hessian, ``P`` the pairwise inclusion matrix expanded to
    coordinates and ``D = blockdiag(p_i v_i B_i)``.  ESO holds exactly when
    the result is nonnegative.
    """
    if not obj.is_quadratic:
        raise ValueError("quadratic certification needs square losses")
    if s.n != obj.n:
        raise ValueError(f"sampling is over {s.n} blocks, objective has {obj.n}")
    v = np.asarray(v, dtype=float)
    p = s.probabilities()
    M = obj.hessian_bound_matrix()
    D = np.zeros_like(M)
    for i in range(obj.n):
        sl = obj.partition.slice(i)
        D[sl, sl] = p[i] * v[i] * obj.metric.matrix(i)
    Q = D - _coordinate_inclusion(obj, s, cap) * M
    return float(np.linalg.eigvalsh(0.5 * (Q + Q.T))[0])


def falsify_monte_carlo(obj: SmoothObjective, s: Sampling, v, trials: int,
                        seed: int = 0, samples: int = 1000, cap=None) -> float:
    """Worst relative ESO violation over random ``(x, h)`` pairs.

    The expectation is exact over enumerated atoms when the sampling allows
    it, otherwise a mean of ``samples`` draws.  Returns
    ``max (lhs - rhs) / max(1, |rhs|)``; values above zero falsify ``v``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    v = np.asarray(v, dtype=float)
    rng = make_rng(seed)
    p = s.probabilities()
    part = obj.partition
    try:
        atoms = s.atoms(cap)
    except AtomCapExceeded:
        atoms = None
    w_p = part.expand(p)
    worst = -np.inf
    for _ in range(trials):
        x = rng.standard_normal(obj.N)
        h = rng.standard_normal(obj.N)
        rx = obj.residual(x)
        fx = obj.value_from_residual(rx)
        grad = obj.gradient_from_residual(rx)
        rhs = fx + float(grad @ (w_p * h)) + 0.5 * float((v * p) @ obj.metric.block_quadratic(h))
        if atoms is not None:
            lhs = sum(prob * _value_on_subset(obj, rx, h, S) for S, prob in atoms)
        else:
            sampler = s.sampler(rng)
            lhs = np.mean([_value_on_subset(obj, rx, h, sampler()) for _ in range(samples)])
        worst = max(worst, (lhs - rhs) / max(1.0, abs(rhs)))
    return float(worst)


def _value_on_subset(obj, rx, h, S):
    r = rx.copy()
    for i in S:
        obj.add_block_product(r, i, h[obj.partition.slice(i)])
    return obj.value_from_residual(r)


def optimal_serial_probabilities(L, d, floor: float = 1e-6) -> np.ndarray:
    """Serial probabilities ``p_i ~ (L_i d_i)^(1/3)``.

    ``d_i`` is the squared block distance ``||x*^i - x0^i||_i^2``.  Zero
    distances are raised to ``floor`` so every block stays sampled.
    """
    L = np.asarray(L, dtype=float)
    d = np.asarray(d, dtype=float)
    if L.shape != d.shape:
        raise ValueError("L and d must have the same length")
    if not np.all(L > 0):
        raise ValueError("L must be positive")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    if not np.any(d > 0):
        raise ValueError("all block distances are zero; x0 is already optimal")
    d = np.where(d > 0, d, floor)
    w = np.cbrt(L * d)
    return w / w.sum()
