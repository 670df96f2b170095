"""Command line entry point: ``alpha solve | check | certify``.

Exit codes: 0 success, 1 check failed or ESO not certified, 2 bad
configuration, 3 malformed data.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .blockspace import BlockPartition
from .data import DataFormatError, normalize_columns, read_coo, read_sparse_rows, read_targets, sniff_format
from .eso import CERT_TOL, certify_quadratic, falsify_monte_carlo, full_eso, serial_eso
from .objective import LogisticLoss, SmoothObjective, SquareLoss
from .regularizer import Regularizer
from .sampling import AtomCapExceeded, parse_sampling
from .solver import (ConfigError, PRESETS, Problem, SolverConfig, ThetaSchedule, default_v,
                     preset, run)

__all__ = ["main", "build_parser"]

EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


class _DataError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser):
    g = p.add_argument_group("problem")
    g.add_argument("--config", help="key=value file; keys are flag names without dashes")
    g.add_argument("--data", help="coordinate-list or label idx:val file")
    g.add_argument("--targets", help="targets, one per line (required for coordinate lists)")
    g.add_argument("--loss", choices=("quadratic", "logistic"), default="quadratic")
    g.add_argument("--reg", choices=("none", "l1", "sql2", "box"), default="none")
    g.add_argument("--lambda", dest="lam", type=float, default=0.0)
    g.add_argument("--box", help="lo,hi")
    g.add_argument("--block-size", type=int, default=1,
                   help="uniform block size (must divide the number of columns)")
    g.add_argument("--normalize-columns", action="store_true")

    g = p.add_argument_group("method")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--sampling", default="serial-uniform",
                   help="full | serial-uniform | serial:q1,..,qn | tau-nice:T | distributed:C,T")
    g.add_argument("--schedule", choices=("constant", "accelerated"), default="constant")
    g.add_argument("--theta0", type=float)
    g.add_argument("--eso", choices=("serial", "full", "user"),
                   help="source of v (default: derived from the sampling)")
    g.add_argument("--v", help="ESO weights: a number, a comma list or a file")
    g.add_argument("--v-scale", type=float, default=1.0, help="multiply v (negative controls)")
    g.add_argument("--variant", choices=("generic", "smooth", "efficient"), default="generic")

    g = p.add_argument_group("run")
    g.add_argument("--iters", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--seeds", help="inclusive range a..b")
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--out")
    g.add_argument("--log-stride", type=int)
    g.add_argument("--no-eval", action="store_true",
                   help="skip objective evaluation (cost benchmarks)")
    g.add_argument("--x0", help="starting point file (default zero)")
    g.add_argument("--xstar", help="minimizer file, one value per line")
    g.add_argument("--compute-xstar", action="store_true")
    g.add_argument("--xstar-iters", type=int, default=100_000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alpha", description="Randomized block coordinate descent")
    sub = parser.add_subparsers(dest="command", required=True)

    commands = {}
    p = commands["solve"] = sub.add_parser("solve", help="run the method and write CSV traces")
    _add_common(p)
    p.add_argument("--bound", action="store_true",
                   help="append bound_nonacc,bound_acc columns (needs x*)")
    p.add_argument("--diagnostics", choices=("gamma",))

    p = commands["check"] = sub.add_parser("check", help="compare mean suboptimality with the theoretical bound")
    _add_common(p)
    p.add_argument("--slack", type=float,
                   help="allowed relative excess (default 0.05 randomized, 1e-9 deterministic)")

    p = commands["certify"] = sub.add_parser("certify", help="certify the ESO weights for the sampling")
    _add_common(p)
    p.add_argument("--mode", choices=("psd", "mc"), default="psd")
    p.add_argument("--trials", type=int, default=100)
    parser.commands = commands
    return parser


# ------------------------------------------------------------------ config


def _config_tokens(path, parser: argparse.ArgumentParser, command: str) -> list[str]:
    sub = parser.commands[command]
    options = {opt: act for act in sub._actions for opt in act.option_strings}
    tokens = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (t.strip() for t in line.split("=", 1))
            flag = "--" + key
            act = options.get(flag)
            if act is None or key == "config":
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if act.nargs == 0:
                if value.lower() in ("1", "true", "yes", "on"):
                    tokens.append(flag)
                elif value.lower() not in ("0", "false", "no", "off"):
                    raise ConfigError(f"{path}:{lineno}: {key} expects true or false")
            else:
                tokens += [flag, value]
    return tokens


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        tokens = _config_tokens(args.config, parser, args.command)
        # explicit flags come last and win
        args = parser.parse_args([args.command] + tokens + list(argv[1:]))
    return args


# ----------------------------------------------------------------- problem


def _read_vector(spec, n, what):
    if spec is None:
        return None
    if os.path.exists(spec):
        vals = read_targets(spec)
    else:
        try:
            vals = np.array([float(t) for t in spec.split(",")])
        except ValueError:
            raise ConfigError(f"{what}: not a number list or file: {spec!r}") from None
    if vals.size == 1 and n is not None:
        vals = np.full(n, vals[0])
    return vals


def load_problem(args) -> Problem:
    if not args.data:
        raise ConfigError("--data is required")
    try:
        if sniff_format(args.data) == "libsvm":
            A, labels = read_sparse_rows(args.data)
        else:
            A, labels = read_coo(args.data), None
        if args.targets:
            labels = read_targets(args.targets)
    except OSError as exc:
        raise ConfigError(f"cannot read data: {exc}") from None
    if labels is None:
        raise ConfigError("--targets is required for coordinate-list data")
    if args.normalize_columns:
        A = normalize_columns(A)
    N = A.shape[1]
    if args.block_size < 1 or N % args.block_size:
        raise ConfigError(f"block size {args.block_size} does not divide {N} columns")
    part = BlockPartition.uniform(N // args.block_size, args.block_size)
    try:
        loss = LogisticLoss(labels) if args.loss == "logistic" else SquareLoss(labels)
        obj = SmoothObjective(A, loss, part)
    except ValueError as exc:
        raise _DataError(str(exc)) from None

    if args.reg == "none":
        reg = Regularizer.zero(part)
    elif args.reg == "l1":
        if args.block_size != 1:
            raise ConfigError("l1 needs --block-size 1")
        reg = Regularizer.l1(part, args.lam)
    elif args.reg == "sql2":
        reg = Regularizer.sq_l2(part, args.lam)
    else:
        if not args.box:
            raise ConfigError("--reg box needs --box lo,hi")
        try:
            lo, hi = (float(t) for t in args.box.split(","))
        except ValueError:
            raise ConfigError(f"--box expects lo,hi, got {args.box!r}") from None
        reg = Regularizer.box(part, lo, hi)
    return Problem(obj, reg)


def _resolve_v(args, problem, sampling):
    obj = problem.objective
    source = args.eso
    if args.v is not None and source in (None, "user"):
        v = _read_vector(args.v, problem.n, "--v")
    elif source == "serial":
        if not sampling.is_serial:
            raise ConfigError("--eso serial is only valid for serial samplings")
        v = serial_eso(obj)
    elif source == "full":
        if not sampling.is_full:
            raise ConfigError("--eso full is only valid for the full sampling")
        v = full_eso(obj)
    elif source == "user":
        raise ConfigError("--eso user needs --v")
    else:
        v = default_v(obj, sampling)
        if v is None:
            raise ConfigError(f"no ESO formula for sampling {args.sampling!r}; pass --v")
    return np.asarray(v, dtype=float) * args.v_scale


def build_config(args, problem: Problem, seed=None) -> SolverConfig:
    n = problem.n
    sampling = parse_sampling(args.sampling, n)
    kwargs = dict(iters=args.iters, seed=args.seed if seed is None else seed,
                  variant=args.variant, log_stride=args.log_stride, evaluate=not args.no_eval)
    if args.preset:
        if PRESETS[args.preset].sampling == "full":
            sampling = None
        v = None
        if args.v is not None or args.eso or args.v_scale != 1.0:
            v = _resolve_v(args, problem, sampling or parse_sampling("full", n))
        return preset(args.preset, problem, sampling=sampling, v=v, **kwargs)
    v = _resolve_v(args, problem, sampling)
    if args.theta0 is not None:
        theta0 = args.theta0
    elif problem.regularizer.is_zero:
        theta0 = 1.0
    else:
        theta0 = float(sampling.probabilities().min())
    config = SolverConfig(sampling=sampling, v=v, schedule=ThetaSchedule(args.schedule, theta0),
                          **kwargs)
    config.validate_for(problem)
    return config


def _seeds(args) -> list[int]:
    if not args.seeds:
        return [args.seed]
    try:
        a, b = (int(t) for t in args.seeds.split(".."))
    except ValueError:
        raise ConfigError(f"--seeds expects a..b, got {args.seeds!r}") from None
    if b < a:
        raise ConfigError("--seeds range is empty")
    return list(range(a, b + 1))


def _seed_path(out, seed):
    p = Path(out)
    return p.with_name(f"{p.stem}.seed{seed}{p.suffix}")


def _x0(args, problem):
    x0 = _read_vector(args.x0, None, "--x0")
    if x0 is not None and x0.shape != (problem.objective.N,):
        raise ConfigError(f"--x0 has {x0.size} entries, expected {problem.objective.N}")
    return x0


def _xstar(args, problem, required):
    if args.xstar:
        xs = read_targets(args.xstar)
        if xs.shape != (problem.objective.N,):
            raise ConfigError(f"--xstar has {xs.size} entries, expected {problem.objective.N}")
        return xs, problem.value(xs)
    if args.compute_xstar:
        return analysis.reference_solution(problem, iters=args.xstar_iters)
    if required:
        raise ConfigError("a reference minimizer is required: pass --xstar FILE or --compute-xstar")
    return None, None


# ----------------------------------------------------------------- commands


def _one_run(problem, config, x0):
    return run(problem, config, x0)


def _run_seeds(args, problem, x0):
    seeds = _seeds(args)
    configs = [build_config(args, problem, s) for s in seeds]
    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_one_run, [problem] * len(seeds), configs, [x0] * len(seeds)))
    else:
        results = [_one_run(problem, c, x0) for c in configs]
    return configs, results


def solve_command(args) -> int:
    problem = load_problem(args)
    x0 = _x0(args, problem)
    xstar, Fstar = _xstar(args, problem, required=args.bound)
    seeds = _seeds(args)
    out = args.out or "trace.csv"

    if args.diagnostics == "gamma":
        if len(seeds) > 1:
            raise ConfigError("--diagnostics gamma runs a single seed")
        config = build_config(args, problem)
        return _gamma_diagnostics(problem, config, x0, out, xstar, Fstar, args)

    configs, results = _run_seeds(args, problem, x0)
    for config, res in zip(configs, results):
        _write_trace(res, config, problem, x0, xstar, Fstar, args, out, len(seeds) > 1)
    return 0


def _write_trace(res, config, problem, x0, xstar, Fstar, args, out, fan_out):
    trace = res.trace
    if args.bound:
        ks = trace.column("k")
        bn, ba = analysis.theorem_bounds(problem, config, ks, x0, xstar, Fstar)
        trace = trace.with_columns(("bound_nonacc", "bound_acc"), (bn, ba))
    path = _seed_path(out, res.seed) if fan_out else Path(out)
    trace.to_csv(path)
    F = problem.value(res.x) if not args.no_eval else float("nan")
    print(f"seed={res.seed} iters={config.iters} F={F:.12g} touched_nnz={res.touched_nnz} "
          f"trace={path}")


def _gamma_diagnostics(problem, config, x0, out, xstar, Fstar, args) -> int:
    table = analysis.GammaTable(config.p)
    if config.iters > table.cap:
        raise ConfigError(f"--diagnostics gamma supports at most {table.cap} iterations")
    worst = {"gamma_min": np.inf, "sum_err": 0.0, "x_err": 0.0, "psi_excess": -np.inf}
    reg = problem.regularizer

    def observe(snap):
        table.observe(snap)
        worst["gamma_min"] = min(worst["gamma_min"], float(table.gamma.min()))
        worst["sum_err"] = max(worst["sum_err"], float(np.abs(table.row_sums() - 1).max()))
        xr = analysis.reconstruct_x(table, problem.partition)
        worst["x_err"] = max(worst["x_err"], float(np.abs(xr - snap.x).max()))
        excess = reg.value(snap.x) - analysis.psi_hat(table, reg)
        worst["psi_excess"] = max(worst["psi_excess"], excess)

    res = run(problem, config, x0, callback=observe)
    _write_trace(res, config, problem, x0, xstar, Fstar, args, out, False)
    print("gamma: min={gamma_min:.3e} max|rowsum-1|={sum_err:.3e} "
          "max|x_rec-x|={x_err:.3e} max(psi-psi_hat)={psi_excess:.3e}".format(**worst))
    ok = (worst["gamma_min"] >= -1e-12 and worst["sum_err"] <= 1e-10
          and worst["x_err"] <= 1e-8 and worst["psi_excess"] <= 1e-10)
    if not ok:
        print("gamma diagnostics: FAIL (theta0 > min p_i voids the convex-combination property)")
        return EXIT_FAIL
    return 0


def check_command(args) -> int:
    if args.no_eval:
        raise ConfigError("check needs objective values; drop --no-eval")
    problem = load_problem(args)
    x0 = _x0(args, problem)
    xstar, Fstar = _xstar(args, problem, required=True)
    configs, results = _run_seeds(args, problem, x0)
    config = configs[0]
    ks = results[0].trace.column("k")
    gaps = np.mean([r.trace.column("F") for r in results], axis=0) - Fstar
    bn, ba = analysis.theorem_bounds(problem, config, ks, x0, xstar, Fstar)
    if config.schedule.kind == "accelerated":
        bound, observed = ba, gaps
    else:
        # the constant-theta bound covers min_{l<=k} E F(x_l)
        bound, observed = bn, np.minimum.accumulate(gaps)
    slack = args.slack
    if slack is None:
        slack = 1e-9 if config.sampling.is_full else 0.05
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, observed / bound, np.where(observed <= 0, 0.0, np.inf))
    worst = float(ratio.max()) if ratio.size else 0.0
    verdict = "PASS" if worst <= 1 + slack else "FAIL"

    lines = ["k,mean_gap,bound,ratio"]
    lines += [f"{int(k)},{float(g)!r},{float(b)!r},{float(r)!r}"
              for k, g, b, r in zip(ks, observed, bound, ratio)]
    lines.append(f"# max_ratio={worst!r} slack={slack!r} seeds={len(results)} {verdict}")
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"max ratio {worst:.6g} over {len(ks)} logged iterations, {len(results)} seeds, "
          f"slack {slack:g}: {verdict}")
    return 0 if verdict == "PASS" else EXIT_FAIL


def certify_command(args) -> int:
    problem = load_problem(args)
    sampling = parse_sampling(args.sampling, problem.n)
    v = _resolve_v(args, problem, sampling)
    obj = problem.objective
    if args.mode == "psd":
        if not obj.is_quadratic:
            raise ConfigError("psd certification needs --loss quadratic; use --mode mc")
        try:
            lam = certify_quadratic(obj, sampling, v)
        except AtomCapExceeded as exc:
            raise ConfigError(f"{exc}; use --mode mc") from None
        ok = lam >= CERT_TOL
        print(f"lambda_min={lam:.6e} {'certified' if ok else 'NOT certified'}")
    else:
        worst = falsify_monte_carlo(obj, sampling, v, args.trials, seed=args.seed)
        ok = worst <= 1e-10
        print(f"worst_violation={worst:.6e} over {args.trials} trials "
              f"{'no violation found' if ok else 'ESO violated'}")
    return 0 if ok else EXIT_FAIL


COMMANDS = {"solve": solve_command, "check": check_command, "certify": certify_command}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except DataFormatError as exc:
        print(f"alpha: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _DataError as exc:
        print(f"alpha: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"alpha: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
