"""The ALPHA iteration and its named special cases.

Three realizations share one configuration:

``generic``    the three-sequence method with a block prox step;
``smooth``     the same loop with the explicit gradient step (``psi = 0``);
``efficient``  the change of variables ``y_k = z_k + alpha_k g_k`` with the
               residuals ``u_k = A g_k`` and ``w_k = A z_k`` kept up to date,
               so an iteration only reads the columns of the sampled blocks.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .blockspace import as_weights
from .eso import full_eso, serial_eso
from .objective import SmoothObjective, TouchCounter
from .regularizer import Regularizer, gradient_step
from .sampling import FullSampling, Sampling, SerialSampling, make_rng

__all__ = [
    "ConfigError",
    "Problem",
    "ThetaSchedule",
    "theta_next",
    "SolverConfig",
    "Snapshot",
    "Trace",
    "RunResult",
    "run",
    "run_generic",
    "run_smooth",
    "run_efficient",
    "PRESETS",
    "preset",
    "default_log_stride",
]

TRACE_COLUMNS = ("k", "F", "f", "psi", "theta", "touched_nnz", "wall_ns")

# alpha_k below this is folded into g_k to keep the representation finite
_ALPHA_FLOOR = 1e-150


class ConfigError(ValueError):
    """Inconsistent solver parameters."""


@dataclass
class Problem:
    """``F = f + psi``."""

    objective: SmoothObjective
    regularizer: Regularizer | None = None

    def __post_init__(self):
        if self.regularizer is None:
            self.regularizer = Regularizer.zero(self.objective.partition)
        if self.regularizer.partition != self.objective.partition:
            raise ValueError("objective and regularizer use different partitions")
        self.regularizer.check_metric(self.objective.metric)

    @property
    def partition(self):
        return self.objective.partition

    @property
    def n(self):
        return self.objective.n

    def value(self, x) -> float:
        return self.objective.value(x) + self.regularizer.value(x)


def theta_next(theta: float) -> float:
    """``(sqrt(theta^4 + 4 theta^2) - theta^2) / 2``."""
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    t2 = theta * theta
    return (math.sqrt(t2 * t2 + 4 * t2) - t2) / 2


@dataclass(frozen=True)
class ThetaSchedule:
    kind: str = "constant"      # constant | accelerated
    theta0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "accelerated"):
            raise ConfigError(f"unknown schedule {self.kind!r}")
        if not 0 < self.theta0 <= 1:
            raise ConfigError(f"theta0 must lie in (0, 1], got {self.theta0}")

    def __iter__(self) -> Iterator[float]:
        theta = self.theta0
        while True:
            yield theta
            if self.kind == "accelerated":
                theta = theta_next(theta)

    def values(self, count: int) -> np.ndarray:
        it = iter(self)
        return np.array([next(it) for _ in range(count)])


def default_log_stride(iters: int) -> int:
    return 1 if iters <= 10_000 else math.ceil(iters / 10_000)


@dataclass
class SolverConfig:
    sampling: Sampling
    v: np.ndarray
    schedule: ThetaSchedule
    iters: int
    seed: int = 0
    variant: str = "generic"    # generic | smooth | efficient
    log_stride: int | None = None
    evaluate: bool = True
    track_average: bool = False

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        if self.variant not in ("generic", "smooth", "efficient"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.iters < 0:
            raise ConfigError("iteration budget must be nonnegative")
        try:
            as_weights(self.v, self.sampling.n)
        except ValueError as exc:
            raise ConfigError(f"v: {exc}") from None
        if self.log_stride is None:
            self.log_stride = default_log_stride(self.iters)
        if self.log_stride < 1:
            raise ConfigError("log stride must be >= 1")

    @property
    def p(self) -> np.ndarray:
        return self.sampling.probabilities()

    def validate_for(self, problem: Problem):
        if self.sampling.n != problem.n:
            raise ConfigError(f"sampling is over {self.sampling.n} blocks, problem has {problem.n}")
        pmin = float(self.p.min())
        if not problem.regularizer.is_zero and self.schedule.theta0 > pmin:
            raise ConfigError(
                f"theta0={self.schedule.theta0:g} exceeds min_i p_i={pmin:g}; with a nonzero "
                "regularizer theta0 must satisfy theta0 <= min_i p_i")


@dataclass
class Snapshot:
    """Iterate ``k`` as seen by a callback.

    ``y`` and ``theta`` are ``y_{k-1}`` and ``theta_{k-1}``, the values that
    produced ``x_k`` (``None`` at ``k = 0``).  Arrays must not be mutated.
    """

    k: int
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray | None = None
    theta: float | None = None
    blocks: np.ndarray | None = None


class Trace:
    """Per-iteration log; serialized as CSV with header ``TRACE_COLUMNS``."""

    def __init__(self, rows=None, extra_columns=()):
        self.rows = list(rows or [])
        self.extra_columns = tuple(extra_columns)

    @property
    def columns(self):
        return TRACE_COLUMNS + self.extra_columns

    def append(self, k, F, f, psi, theta, touched, wall_ns):
        self.rows.append((k, F, f, psi, theta, touched, wall_ns))

    def column(self, name) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows])

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_fmt(v) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header[:len(TRACE_COLUMNS)] != TRACE_COLUMNS:
                raise ValueError(f"{path}: not a trace file")
            rows = []
            for rec in reader:
                row = [int(rec[0])] + [float(t) for t in rec[1:5]] + [int(rec[5]), int(rec[6])]
                row += [float(t) for t in rec[7:]]
                rows.append(tuple(row))
        return cls(rows, header[len(TRACE_COLUMNS):])

    def with_columns(self, names, values) -> "Trace":
        rows = [tuple(row) + tuple(float(c[j]) for c in values)
                for j, row in enumerate(self.rows)]
        return Trace(rows, self.extra_columns + tuple(names))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class RunResult:
    x: np.ndarray
    z: np.ndarray
    trace: Trace
    touched_nnz: int
    x_avg: np.ndarray | None = None
    seed: int = 0


class _Logger:
    def __init__(self, problem: Problem, config: SolverConfig, counter: TouchCounter):
        self.problem = problem
        self.config = config
        self.counter = counter
        self.trace = Trace()
        self.start = time.monotonic_ns()

    def due(self, k):
        return k % self.config.log_stride == 0 or k == self.config.iters

    def log(self, k, theta, x, rx):
        if self.config.evaluate:
            f = self.problem.objective.value_from_residual(rx)
            psi = self.problem.regularizer.value(x)
        else:
            f = psi = math.nan
        self.trace.append(k, f + psi, f, psi, theta, self.counter.count,
                          time.monotonic_ns() - self.start)


class _Average:
    """``(x_k + theta0 * sum_{l=1}^{k-1} x_l) / (1 + (k-1) theta0)``."""

    def __init__(self, theta0, N):
        self.theta0 = theta0
        self.past = np.zeros(N)
        self.k = 0
        self.value = None

    def push(self, x):
        self.k += 1
        self.value = (x + self.theta0 * self.past) / (1 + (self.k - 1) * self.theta0)
        self.past += x


def _start(problem: Problem, config: SolverConfig, x0):
    config.validate_for(problem)
    N = problem.objective.N
    x0 = np.zeros(N) if x0 is None else np.array(x0, dtype=float)
    if x0.shape != (N,):
        raise ValueError(f"x0 must have length {N}")
    if not problem.regularizer.in_domain(x0):
        raise ValueError("x0 is outside the domain of the regularizer")
    return x0


def run_generic(problem: Problem, config: SolverConfig, x0=None,
                callback: Callable[[Snapshot], None] | None = None) -> RunResult:
    """Three-sequence ALPHA with the regularizer's block prox."""
    reg = problem.regularizer
    metric = problem.objective.metric

    def block_step(i, g, zi, tau):
        return reg.prox_step(i, g, zi, tau, metric)

    def coord_step(coords, g, z, tau):
        return reg.prox_coords(coords, g, z, tau, metric)

    return _three_sequence(problem, config, x0, callback, block_step, coord_step)


def run_smooth(problem: Problem, config: SolverConfig, x0=None,
               callback: Callable[[Snapshot], None] | None = None) -> RunResult:
    """Three-sequence ALPHA for ``psi = 0`` with the explicit step
    ``z^i <- z^i - (p_i / (v_i theta_k)) B_i^{-1} grad_i f(y_k)``."""
    if not problem.regularizer.is_zero:
        raise ConfigError("run_smooth needs a zero regularizer")
    metric = problem.objective.metric

    def block_step(i, g, zi, tau):
        return gradient_step(zi, metric.solve_block(i, g), tau)

    def coord_step(coords, g, z, tau):
        return gradient_step(z, g if metric.is_identity else g / metric.diag[coords], tau)

    return _three_sequence(problem, config, x0, callback, block_step, coord_step)


def _three_sequence(problem, config, x0, callback, block_step, coord_step):
    obj = problem.objective
    part = obj.partition
    x0 = _start(problem, config, x0)
    sampling = config.sampling
    p = config.p
    v = config.v
    full = sampling.is_full
    vectorized = full and obj.metric.is_diagonal
    # scalar blocks: one gather over the sampled columns replaces the block loop
    gathered = not full and part.is_scalar and obj.metric.is_identity
    all_coords = np.arange(obj.N)
    p_coord = part.expand(p)
    v_over_p = v / p

    counter = TouchCounter()
    logger = _Logger(problem, config, counter)
    avg = _Average(config.schedule.theta0, obj.N) \
        if config.track_average and config.schedule.kind == "constant" else None
    draw = sampling.sampler(make_rng(config.seed))
    thetas = iter(config.schedule)

    x = x0.copy()
    z = x0.copy()
    rx = obj.residual(x)
    rz = rx.copy()
    if callback:
        callback(Snapshot(0, x, z))

    for k in range(config.iters):
        theta = next(thetas)
        S = draw()
        single = full and theta == 1.0
        if single:
            # x_k = y_k = z_k: skip the convex combination
            y, ry = z, rz
        else:
            y = (1 - theta) * x + theta * z
            ry = (1 - theta) * rx + theta * rz

        if full:
            g = obj.gradient_from_residual(ry)
            counter.count += obj.nnz
            tau = theta * v_over_p
            if vectorized:
                z_new = coord_step(all_coords, g, z, part.expand(tau))
            else:
                z_new = z.copy()
                for i in range(part.n):
                    sl = part.slice(i)
                    z_new[sl] = block_step(i, g[sl], z[sl], tau[i])
            if single:
                x_new = z_new
            else:
                x_new = y + (theta / p_coord) * (z_new - z)
            rz = obj.residual(z_new)
            rx = rz if single else obj.residual(x_new)
        elif gathered:
            rows, vals, owner = obj.sampled_columns(S)
            gS = obj.sampled_gradient(S, ry[rows], rows, vals, owner, counter)
            zS = coord_step(S, gS, z[S], theta * v_over_p[S])
            dz = zS - z[S]
            step = theta / p[S]
            z_new = z.copy()
            z_new[S] = zS
            x_new = y.copy()
            x_new[S] += step * dz
            Adz = vals * dz[owner]
            rx = ry.copy()
            np.add.at(rz, rows, Adz)
            np.add.at(rx, rows, step[owner] * Adz)
        else:
            steps = []
            for i in S:
                sl = part.slice(i)
                gi = obj.block_gradient(i, ry, counter)
                zi = block_step(i, gi, z[sl], theta * v_over_p[i])
                steps.append((i, sl, zi - z[sl], zi))
            z_new = z.copy()
            x_new = y.copy()
            rx = ry.copy()
            for i, sl, dzi, zi in steps:
                z_new[sl] = zi
                x_new[sl] += (theta / p[i]) * dzi
                obj.add_block_product(rz, i, dzi)
                obj.add_block_product(rx, i, dzi, theta / p[i])
        x, z = x_new, z_new

        if avg is not None:
            avg.push(x)
        if callback:
            callback(Snapshot(k + 1, x, z, y, theta, S))
        if logger.due(k + 1):
            logger.log(k + 1, theta, x, rx)

    return RunResult(x, z, logger.trace, counter.count,
                     None if avg is None else avg.value, config.seed)


def run_efficient(problem: Problem, config: SolverConfig, x0=None,
                  callback: Callable[[Snapshot], None] | None = None) -> RunResult:
    """ALPHA without full-dimensional vector operations.

    Valid when ``theta_k < 1`` for every ``k >= 1`` or ``theta_k = 1`` for
    every ``k``.  With ``evaluate=False`` and no callback an iteration reads
    only the stored entries of the sampled column blocks.
    """
    obj = problem.objective
    reg = problem.regularizer
    metric = obj.metric
    part = obj.partition
    x0 = _start(problem, config, x0)
    p = config.p
    v_over_p = config.v / p
    all_ones = config.schedule.kind == "constant" and config.schedule.theta0 == 1.0

    counter = TouchCounter()
    logger = _Logger(problem, config, counter)
    avg = _Average(config.schedule.theta0, obj.N) \
        if config.track_average and config.schedule.kind == "constant" else None
    draw = config.sampling.sampler(make_rng(config.seed))
    thetas = iter(config.schedule)

    z = x0.copy()
    g = np.zeros(obj.N)
    w = obj.residual(z)
    u = np.zeros(obj.m)
    slices = [part.slice(i) for i in range(part.n)]
    gathered = part.is_scalar and metric.is_identity
    alpha = 1.0
    theta = next(thetas)
    if callback:
        callback(Snapshot(0, z.copy(), z.copy()))

    steps = []
    last_alpha = alpha
    for k in range(config.iters):
        if alpha < _ALPHA_FLOOR:
            g *= alpha
            u *= alpha
            alpha = 1.0
        S = draw()
        y = z + alpha * g if callback else None
        if gathered:
            rows, vals, owner = obj.sampled_columns(S)
            r_rows = w[rows] if all_ones else alpha * u[rows] + w[rows]
            gS = obj.sampled_gradient(S, r_rows, rows, vals, owner, counter)
            t = reg.prox_coords(S, gS, z[S], theta * v_over_p[S], metric) - z[S]
            z[S] += t
            At = vals * t[owner]
            np.add.at(w, rows, At)
            if all_ones:
                steps = [(i, slices[i], t[j:j + 1]) for j, i in enumerate(S)]
            else:
                coef = (1 - theta / p[S]) / alpha
                g[S] -= coef * t
                np.add.at(u, rows, -coef[owner] * At)
        else:
            steps = _block_updates(obj, reg, metric, S, slices, z, g, w, u, alpha, theta,
                                   v_over_p, p, all_ones, counter)

        if callback or avg is not None or (config.evaluate and logger.due(k + 1)):
            if all_ones:
                x = _all_ones_x(obj, z, steps, p)
                rx = w.copy()
                for i, sl, t in steps:
                    obj.add_block_product(rx, i, t, 1 / p[i] - 1)
            else:
                # x_{k+1} = z_{k+1} + alpha_k g_{k+1}
                x = z + alpha * g
                rx = w + alpha * u
            if avg is not None:
                avg.push(x)
            if callback:
                callback(Snapshot(k + 1, x, z.copy(), y, theta, S))
            if logger.due(k + 1):
                logger.log(k + 1, theta, x, rx)
        elif logger.due(k + 1):
            logger.log(k + 1, theta, None, None)

        last_alpha = alpha
        theta = next(thetas)
        if not all_ones:
            if theta == 1.0:
                raise ConfigError(
                    f"theta_{k + 1} = 1 inside a schedule that is not identically 1; "
                    "the efficient variant cannot represent it")
            alpha *= 1 - theta

    if all_ones:
        x_final = _all_ones_x(obj, z, steps, p)
    else:
        x_final = z + last_alpha * g if config.iters else z.copy()
    return RunResult(x_final, z.copy(), logger.trace, counter.count,
                     None if avg is None else avg.value, config.seed)


def _block_updates(obj, reg, metric, S, slices, z, g, w, u, alpha, theta, v_over_p, p,
                   all_ones, counter):
    # one efficient-variant iteration over general blocks; updates z, g, w, u in place
    steps = []
    for i in S:
        sl = slices[i]
        rows = obj.rows[i]
        r_rows = w[rows] if all_ones else alpha * u[rows] + w[rows]
        gi = obj.block_gradient_rows(i, r_rows, counter)
        zi = reg.prox_step(i, gi, z[sl], theta * v_over_p[i], metric)
        steps.append((i, sl, zi - z[sl]))
    for i, sl, t in steps:
        z[sl] += t
        rows = obj.rows[i]
        At = obj.blocks[i] @ t
        w[rows] += At
        if not all_ones:
            coef = (1 - theta / p[i]) / alpha
            g[sl] -= coef * t
            u[rows] -= coef * At
    return steps


def _all_ones_x(obj, z, steps, p):
    x = z.copy()
    for i, sl, t in steps:
        x[sl] += (1 / p[i] - 1) * t
    return x


def run(problem: Problem, config: SolverConfig, x0=None, callback=None) -> RunResult:
    runner = {"generic": run_generic, "smooth": run_smooth,
              "efficient": run_efficient}[config.variant]
    return runner(problem, config, x0, callback)


# ---------------------------------------------------------------- presets

@dataclass(frozen=True)
class _Preset:
    sampling: str       # "full" or "given"
    schedule: str
    theta0: str         # "one" | "min_p" | "mean_size"
    smooth_only: bool
    uniform_only: bool = False


PRESETS = {
    "gd": _Preset("full", "constant", "one", True),
    "agd": _Preset("full", "accelerated", "one", True),
    "pcd": _Preset("given", "constant", "min_p", True),
    "apcd": _Preset("given", "accelerated", "one", True),
    "prox_gd": _Preset("full", "constant", "one", False),
    "acc_prox_gd": _Preset("full", "accelerated", "one", False),
    "pcdm": _Preset("given", "constant", "mean_size", False, uniform_only=True),
    "approxis": _Preset("given", "accelerated", "min_p", False),
}


def default_v(objective: SmoothObjective, sampling: Sampling):
    """ESO weights when they follow from the sampling alone, else ``None``."""
    if sampling.is_full:
        return full_eso(objective)
    if sampling.is_serial:
        return serial_eso(objective)
    return None


def preset(name: str, problem: Problem, sampling: Sampling | None = None, v=None,
           iters: int = 100, **kwargs) -> SolverConfig:
    """Configuration of a named special case.

    ``sampling`` defaults to the serial uniform sampling for the randomized
    presets and is forced to the full sampling for the deterministic ones.
    ``v`` defaults to the serial or full ESO when one applies; other
    samplings need user-supplied (and preferably certified) weights.
    """
    try:
        spec = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if spec.smooth_only and not problem.regularizer.is_zero:
        raise ConfigError(f"preset {name} requires a zero regularizer")
    n = problem.n
    if spec.sampling == "full":
        if sampling is not None and not sampling.is_full:
            raise ConfigError(f"preset {name} uses the full sampling")
        sampling = FullSampling(n)
    elif sampling is None:
        sampling = SerialSampling.uniform(n)
    if spec.uniform_only and not sampling.is_uniform:
        raise ConfigError(f"preset {name} needs a uniform sampling")
    if v is None:
        v = default_v(problem.objective, sampling)
        if v is None:
            raise ConfigError(
                f"no ESO formula for {type(sampling).__name__}; supply v (and certify it)")
    theta0 = {"one": 1.0,
              "min_p": float(sampling.probabilities().min()),
              "mean_size": sampling.expected_size / n}[spec.theta0]
    config = SolverConfig(sampling=sampling, v=v, schedule=ThetaSchedule(spec.schedule, theta0),
                          iters=iters, **kwargs)
    config.validate_for(problem)
    return config
