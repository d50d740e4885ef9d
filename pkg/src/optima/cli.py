"""Command line entry point: ``optima <subcommand> ...``.

Exit codes: 0 on success, 2 for bad flags or an invalid instance, 3 when an
exact solver refuses an instance that is too large.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import (DEFAULT_THRESHOLDS, EVAL_PRESETS, analyze_search_space, cp_grid, evaluate_solvers,
                       evaluation_csv, accuracy_solvers)
from .core import ConfigurationError, InstanceConfig, InvalidInstanceError, ProblemInstance, generate_instance
from .solvers import (Cooling, InstanceTooLargeError, InvalidParamsError, SaParams, emit_mip, solve_dp,
                      solve_exhaustive, solve_sa, validate_mip_solution)
from .solvers.mip import load_solution

WORKERS_ENV = "OPTIMA_WORKERS"
EXIT_USAGE = 2
EXIT_GUARD = 3

GEN_KEYS = {"n": int, "m": int, "cp": float, "mu": float, "sigma": float, "seed": int}


class UsageError(Exception):
    pass


def parse_gen(spec: str, default_seed: int = 0) -> InstanceConfig:
    """Parse ``n=9,m=3,cp=0.2[,mu=..,sigma=..,seed=..]`` into an instance config."""
    values: dict = {}
    for part in filter(None, spec.split(",")):
        key, sep, raw = part.partition("=")
        key = key.strip()
        if not sep or key not in GEN_KEYS:
            raise UsageError(f"bad --gen item {part!r}; expected key=value with keys {sorted(GEN_KEYS)}")
        try:
            values[key] = GEN_KEYS[key](raw)
        except ValueError:
            raise UsageError(f"bad value in --gen item {part!r}") from None
    if "n" not in values or "m" not in values:
        raise UsageError("--gen needs at least n and m")
    return InstanceConfig(values["n"], values["m"], values.get("mu", 1000.0), values.get("sigma", 100.0),
                          values.get("cp", 0.0), values.get("seed", default_seed))


def load_instance(args) -> ProblemInstance:
    if getattr(args, "gen", None):
        return generate_instance(parse_gen(args.gen, args.seed))
    if not getattr(args, "instance", None):
        raise UsageError("give an instance file or --gen")
    try:
        text = Path(args.instance).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {args.instance}: {exc.strerror}") from None
    return ProblemInstance.loads(text)


def sa_params_from(args) -> SaParams:
    rate = args.a if args.a is not None else {"linear": 0.01, "geometric": 0.99, "slow": 0.001}[args.cooling]
    return SaParams(args.tmax, Cooling(args.cooling, rate), args.t_halt, args.seed)


def worker_count(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return 1


def write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# subcommands -------------------------------------------------------------

def cmd_gen(args) -> int:
    inst = generate_instance(parse_gen(args.gen, args.seed))
    write_text(args.out, inst.dumps() + "\n")
    return 0


def cmd_solve(args) -> int:
    inst = load_instance(args)
    if args.solver == "es":
        result = solve_exhaustive(inst, force=args.force)
    elif args.solver == "dp":
        result = solve_dp(inst)
    else:
        result = solve_sa(inst, sa_params_from(args))
    print(json.dumps(result.summary()))
    return 0


def cmd_emit_mip(args) -> int:
    inst = load_instance(args)
    model, text = emit_mip(inst, args.big_m)
    write_text(args.out, text)
    if args.validate:
        x, s, ms = load_solution(Path(args.validate).read_text(encoding="utf-8"))
        ok, violations = validate_mip_solution(inst, x, s, ms, model.big_m)
        print(json.dumps({"valid": ok, "violations": violations}), file=sys.stderr if args.out in (None, "-") else sys.stdout)
        return 0 if ok else 1
    return 0


def cmd_analyze(args) -> int:
    try:
        thresholds = tuple(float(t) for t in args.thresholds.split(","))
    except ValueError:
        raise UsageError(f"bad --thresholds {args.thresholds!r}") from None
    curve = analyze_search_space(args.n, args.m, args.mu, args.sigma, cp_grid(args.grid), args.per_point,
                                 thresholds, args.seed, worker_count(args))
    write_text(args.out, curve.to_csv())
    best = int(curve.optimal_ratio.argmin())
    print(f"wrote {len(curve.cp_grid) * len(curve.thresholds)} rows to {args.out}; "
          f"lowest optimal ratio {curve.optimal_ratio[best]:.5f} at cp={curve.cp_grid[best]:g}")
    return 0


def cmd_evaluate(args) -> int:
    preset = EVAL_PRESETS[args.preset]
    instances = args.instances or preset["instances"]
    rows = evaluate_solvers(preset["configs"], accuracy_solvers(), instances, args.seed)
    write_text(args.out, evaluation_csv(rows))
    dp = [r.accuracy for r in rows if r.solver == "dp"]
    print(f"wrote {len(rows)} rows to {args.out}; DP accuracy min {min(dp):.3f}")
    return 0


def cmd_bench(args) -> int:
    from .bench import BENCH_PRESETS, BenchConfig, compare_optimized, comparison_csv, run_benchmark

    if args.config:
        config = BenchConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
    else:
        config = BENCH_PRESETS[args.preset]
    overrides = {k: v for k, v in (("seed", args.seed), ("conflict_level", args.conflict_level),
                                   ("threads", args.threads), ("speed", args.speed), ("job_count", args.jobs))
                 if v is not None}
    config = replace(config, **overrides)
    levels = [config.conflict_level] if args.conflict_level or not args.all_levels else \
        ["very_low", "low", "medium", "high", "very_high"]
    if not args.compare:
        run = run_benchmark(config, optimization=not args.no_optimize)
        print(json.dumps({"throughput": run.throughput, "jobs_completed": run.jobs_completed,
                          "consistent": run.consistent, "engine": run.engine}, indent=2))
        return 0 if run.consistent else 1
    batch_sizes = tuple(int(b) for b in args.batch_sizes.split(","))
    triggers = tuple(t.strip().lower() in ("1", "true", "yes") for t in args.triggers.split(","))
    comparisons = []
    for level in levels:
        comparisons.append(compare_optimized(replace(config, conflict_level=level), batch_sizes, triggers,
                                             args.repetitions))
        print(",".join(str(x) for x in comparisons[-1].row()))
    write_text(args.out, comparison_csv(comparisons))
    if args.json:
        write_text(args.json, "[\n" + ",\n".join(c.to_json() for c in comparisons) + "\n]\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optima", description="Conflict-aware transaction scheduling tools.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=False):
        p.add_argument("--seed", type=int, default=0, help="master seed for every random stream")
        if workers:
            p.add_argument("--workers", type=int, default=None, help=f"worker processes (env {WORKERS_ENV})")

    def instance_source(p):
        p.add_argument("instance", nargs="?", help="instance JSON file")
        p.add_argument("--gen", help="generate instead, e.g. n=9,m=3,cp=0.2,mu=1000,sigma=100")

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--gen", required=True, help="n=..,m=..,cp=..[,mu=..,sigma=..,seed=..]")
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve an instance")
    instance_source(p)
    p.add_argument("--solver", choices=("es", "dp", "sa"), default="dp")
    p.add_argument("--cooling", choices=("linear", "geometric", "slow"), default="linear")
    p.add_argument("--tmax", type=float, default=100.0)
    p.add_argument("--a", "--rate", dest="a", type=float, default=None, help="cooling rate (a, r or beta)")
    p.add_argument("--t-halt", type=float, default=None)
    p.add_argument("--force", action="store_true", help="lift the exhaustive-search size guard")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("emit-mip", help="write the MIP model in LP format")
    instance_source(p)
    p.add_argument("--out", default=None)
    p.add_argument("--big-m", type=float, default=None)
    p.add_argument("--validate", metavar="SOLUTION_JSON", help="check a solution {x, s, ms} against the model")
    common(p)
    p.set_defaults(func=cmd_emit_mip)

    p = sub.add_parser("analyze", help="search-space ratios over conflict parity")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--mu", type=float, default=1000.0)
    p.add_argument("--sigma", type=float, default=100.0)
    p.add_argument("--grid", type=int, default=11, help="number of cp points in [0, 1]")
    p.add_argument("--per-point", type=int, default=100)
    p.add_argument("--thresholds", default=",".join(f"{t:g}" for t in DEFAULT_THRESHOLDS))
    p.add_argument("--out", default="analysis.csv")
    common(p, workers=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="solver accuracy and duration against the exhaustive optimum")
    p.add_argument("--preset", choices=sorted(EVAL_PRESETS), default="desk")
    p.add_argument("--instances", type=int, default=None, help="override instances per configuration")
    p.add_argument("--out", default="evaluation.csv")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="factory-floor benchmark")
    p.add_argument("--preset", choices=("desk", "full", "smoke"), default="desk")
    p.add_argument("--config", help="JSON file with BenchConfig fields")
    p.add_argument("--conflict-level", choices=("very_low", "low", "medium", "high", "very_high"))
    p.add_argument("--all-levels", action="store_true", help="compare at every conflict level")
    p.add_argument("--threads", type=int)
    p.add_argument("--speed", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--compare", action="store_true", help="baseline vs optimised settings on paired job sets")
    p.add_argument("--no-optimize", action="store_true")
    p.add_argument("--batch-sizes", default="50,75")
    p.add_argument("--triggers", default="false,true")
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--out", default="bench.csv")
    p.add_argument("--json", default=None, help="also write the full comparison dump here")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InstanceTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (UsageError, InvalidInstanceError, ConfigurationError, InvalidParamsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
