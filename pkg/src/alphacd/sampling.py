"""Samplings: random subsets of the block index set ``{0, ..., n-1}``.

Every sampling exposes its inclusion probabilities ``p_i = P(i in S)``,
a seeded draw, and (for small ``n``) an exact list of atoms.
Randomness comes from :class:`numpy.random.Generator` over PCG64, which
gives identical streams across platforms for a fixed seed.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DEFAULT_ATOM_CAP",
    "AtomCapExceeded",
    "Sampling",
    "FullSampling",
    "SerialSampling",
    "TauNiceSampling",
    "DistributedSampling",
    "ExplicitSampling",
    "make_rng",
    "parse_sampling",
    "probability_vector",
    "draw",
    "enumerate_atoms",
    "pairwise_inclusion_matrix",
]

DEFAULT_ATOM_CAP = 2 ** 20


class AtomCapExceeded(ValueError):
    """Raised when exact atom enumeration would exceed the configured cap."""


def atom_cap() -> int:
    return int(os.environ.get("ALPHA_ATOM_CAP", DEFAULT_ATOM_CAP))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _partial_shuffle(perm: np.ndarray, tau: int, rng: np.random.Generator) -> np.ndarray:
    # Fisher-Yates on the first tau positions; any starting permutation works
    n = perm.size
    for j in range(tau):
        r = int(rng.integers(j, n))
        perm[j], perm[r] = perm[r], perm[j]
    return np.sort(perm[:tau])


class Sampling:
    """Base class; subclasses are immutable descriptions."""

    n: int

    def probabilities(self) -> np.ndarray:
        raise NotImplementedError

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """One subset, as a sorted array of block indices."""
        return self.sampler(rng)()

    def sampler(self, rng: np.random.Generator):
        """A callable drawing successive subsets from ``rng``.

        Holds whatever scratch space the draw needs so repeated draws do not
        reallocate it.
        """
        raise NotImplementedError

    def atom_count(self) -> int:
        raise NotImplementedError

    def _atoms(self):
        raise NotImplementedError

    def atoms(self, cap: int | None = None) -> list[tuple[np.ndarray, float]]:
        cap = atom_cap() if cap is None else cap
        count = self.atom_count()
        if count > cap:
            raise AtomCapExceeded(
                f"{type(self).__name__} has {count} atoms, above the cap of {cap}; "
                "use the Monte Carlo route instead")
        return list(self._atoms())

    @property
    def expected_size(self) -> float:
        return float(self.probabilities().sum())

    @property
    def is_uniform(self) -> bool:
        p = self.probabilities()
        return bool(np.all(p == p[0]))

    @property
    def is_serial(self) -> bool:
        return False

    @property
    def is_full(self) -> bool:
        return False

    def _check_proper(self):
        p = self.probabilities()
        if not np.all(p > 0):
            bad = np.flatnonzero(~(p > 0))
            raise ValueError(f"sampling is not proper: blocks {bad.tolist()} are never sampled")


@dataclass(frozen=True)
class FullSampling(Sampling):
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")

    def probabilities(self):
        return np.ones(self.n)

    def sampler(self, rng):
        everything = np.arange(self.n)
        return lambda: everything

    def atom_count(self):
        return 1

    def _atoms(self):
        yield np.arange(self.n), 1.0

    @property
    def is_full(self):
        return True

    @property
    def expected_size(self):
        return float(self.n)


@dataclass(frozen=True)
class SerialSampling(Sampling):
    """Exactly one block, block ``i`` with probability ``q_i``."""

    q: tuple

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1 or q.size == 0:
            raise ValueError("q must be a non-empty probability vector")
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
            raise ValueError("serial probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "q", tuple(float(t) for t in q))
        self._check_proper()

    @classmethod
    def uniform(cls, n: int) -> "SerialSampling":
        return cls(tuple([1.0 / n] * n))

    @property
    def n(self):
        return len(self.q)

    def probabilities(self):
        return np.array(self.q)

    def sampler(self, rng):
        cdf = np.cumsum(self.q)
        cdf[-1] = 1.0
        last = self.n - 1

        def _draw():
            i = int(np.searchsorted(cdf, rng.random(), side="right"))
            return np.array([min(i, last)])
        return _draw

    def atom_count(self):
        return self.n

    def _atoms(self):
        for i, qi in enumerate(self.q):
            yield np.array([i]), qi

    @property
    def is_serial(self):
        return True

    @property
    def expected_size(self):
        return 1.0


@dataclass(frozen=True)
class TauNiceSampling(Sampling):
    """Uniformly random subset of cardinality ``tau``."""

    n: int
    tau: int

    def __post_init__(self):
        if not 1 <= self.tau <= self.n:
            raise ValueError(f"tau must lie in [1, {self.n}], got {self.tau}")

    def probabilities(self):
        return np.full(self.n, self.tau / self.n)

    def sampler(self, rng):
        perm = np.arange(self.n)
        return lambda: _partial_shuffle(perm, self.tau, rng)

    def atom_count(self):
        return math.comb(self.n, self.tau)

    def _atoms(self):
        prob = 1.0 / math.comb(self.n, self.tau)
        for S in itertools.combinations(range(self.n), self.tau):
            yield np.array(S), prob

    @property
    def is_serial(self):
        return self.tau == 1

    @property
    def is_full(self):
        return self.tau == self.n

    @property
    def expected_size(self):
        return float(self.tau)


@dataclass(frozen=True)
class DistributedSampling(Sampling):
    """Union of independent ``tau``-nice draws within ``c`` equal groups.

    Group ``g`` holds blocks ``g*n/c, ..., (g+1)*n/c - 1``.
    """

    n: int
    c: int
    tau: int

    def __post_init__(self):
        if self.c < 1 or self.n % self.c != 0:
            raise ValueError(f"c={self.c} must divide n={self.n} (unequal groups are not supported)")
        if not 1 <= self.tau <= self.n // self.c:
            raise ValueError(f"tau must lie in [1, {self.n // self.c}], got {self.tau}")

    @property
    def group_size(self):
        return self.n // self.c

    def probabilities(self):
        return np.full(self.n, self.tau * self.c / self.n)

    def sampler(self, rng):
        s = self.group_size
        perms = [np.arange(g * s, (g + 1) * s) for g in range(self.c)]
        return lambda: np.concatenate(
            [_partial_shuffle(perm, self.tau, rng) for perm in perms])

    def atom_count(self):
        return math.comb(self.group_size, self.tau) ** self.c

    def _atoms(self):
        s = self.group_size
        per_group = [list(itertools.combinations(range(g * s, (g + 1) * s), self.tau))
                     for g in range(self.c)]
        prob = 1.0 / self.atom_count()
        for parts in itertools.product(*per_group):
            yield np.array(sorted(itertools.chain.from_iterable(parts))), prob

    @property
    def expected_size(self):
        return float(self.tau * self.c)


@dataclass(frozen=True)
class ExplicitSampling(Sampling):
    """A finite list of ``(subset, probability)`` atoms."""

    n: int
    atom_list: tuple

    def __post_init__(self):
        atoms = []
        for S, prob in self.atom_list:
            S = tuple(sorted(set(int(i) for i in S)))
            if any(not 0 <= i < self.n for i in S):
                raise ValueError(f"atom {S} has indices outside [0, {self.n})")
            if prob < 0:
                raise ValueError("atom probabilities must be nonnegative")
            atoms.append((S, float(prob)))
        if abs(sum(p for _, p in atoms) - 1.0) > 1e-12:
            raise ValueError("atom probabilities must sum to 1")
        object.__setattr__(self, "atom_list", tuple(atoms))
        self._check_proper()

    def probabilities(self):
        p = np.zeros(self.n)
        for S, prob in self.atom_list:
            p[list(S)] += prob
        return p

    def sampler(self, rng):
        cdf = np.cumsum([prob for _, prob in self.atom_list])
        cdf[-1] = 1.0
        sets = [np.array(S, dtype=np.int64) for S, _ in self.atom_list]

        def _draw():
            k = int(np.searchsorted(cdf, rng.random(), side="right"))
            return sets[min(k, len(sets) - 1)]
        return _draw

    def atom_count(self):
        return len(self.atom_list)

    def _atoms(self):
        for S, prob in self.atom_list:
            yield np.array(S, dtype=np.int64), prob


def parse_sampling(text: str, n: int) -> Sampling:
    """Parse ``full``, ``serial-uniform``, ``serial:<q,...>``, ``tau-nice:<tau>``
    or ``distributed:<c>,<tau>``."""
    text = text.strip()
    kind, _, arg = text.partition(":")
    try:
        if kind == "full" and not arg:
            return FullSampling(n)
        if kind == "serial-uniform" and not arg:
            return SerialSampling.uniform(n)
        if kind == "serial" and arg:
            q = [float(t) for t in arg.split(",")]
            if len(q) != n:
                raise ValueError(f"serial sampling needs {n} probabilities, got {len(q)}")
            return SerialSampling(tuple(q))
        if kind == "tau-nice" and arg:
            return TauNiceSampling(n, int(arg))
        if kind == "distributed" and arg:
            c, tau = (int(t) for t in arg.split(","))
            return DistributedSampling(n, c, tau)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad sampling {text!r}: {exc}") from None
    raise ValueError(f"unknown sampling {text!r}")


def probability_vector(s: Sampling) -> np.ndarray:
    return s.probabilities()


def draw(s: Sampling, rng: np.random.Generator) -> np.ndarray:
    return s.draw(rng)


def enumerate_atoms(s: Sampling, cap: int | None = None):
    return s.atoms(cap)


def pairwise_inclusion_matrix(s: Sampling, cap: int | None = None) -> np.ndarray:
    """``P[i, j] = P(i in S and j in S)`` computed from the atoms."""
    P = np.zeros((s.n, s.n))
    for S, prob in s.atoms(cap):
        P[np.ix_(S, S)] += prob
    return P
