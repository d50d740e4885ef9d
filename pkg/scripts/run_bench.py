"""Factory-floor comparison of optimised against first-come-first-served dispatch.

Runs every conflict level by default and writes the summary table plus a full
JSON dump of each run.
"""
import argparse
import json
from dataclasses import replace
from pathlib import Path

from optima.bench import BENCH_PRESETS, CONFLICT_LEVELS, compare_optimized, comparison_csv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--preset", choices=sorted(BENCH_PRESETS), default="desk")
    p.add_argument("--levels", default=",".join(CONFLICT_LEVELS))
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--speed", type=float, default=None)
    p.add_argument("--batch-sizes", default="50,75")
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="results/bench")
    args = p.parse_args()

    config = replace(BENCH_PRESETS[args.preset], seed=args.seed)
    if args.threads:
        config = replace(config, threads=args.threads)
    if args.speed:
        config = replace(config, speed=args.speed)
    batch_sizes = tuple(int(b) for b in args.batch_sizes.split(","))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    comparisons = []
    for level in args.levels.split(","):
        cmp = compare_optimized(replace(config, conflict_level=level), batch_sizes, (False, True),
                                args.repetitions)
        comparisons.append(cmp)
        imp = cmp.improvements()
        print(f"{level:<10} baseline {cmp.mean_throughput(cmp.baseline):7.3f} jobs/s  best b={cmp.best[0]} "
              f"trigger={cmp.best[1]!s:<5}  improvement min {min(imp):+6.2f}% max {max(imp):+6.2f}% "
              f"mean {sum(imp) / len(imp):+6.2f}%")
    (out / "comparison.csv").write_text(comparison_csv(comparisons))
    (out / "runs.json").write_text(json.dumps([json.loads(c.to_json()) for c in comparisons], indent=1))


if __name__ == "__main__":
    main()
