"""Search-space ratio curves over conflict parity for several (n, m) settings.

Writes one CSV per setting into --out-dir and prints where each optimal-ratio
curve bottoms out.
"""
import argparse
import os
from pathlib import Path

from optima.analysis import analyze_search_space, cp_grid


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--settings", default="9x3,9x4", help="comma separated n x m pairs, e.g. 8x2,9x3")
    p.add_argument("--grid", type=int, default=11)
    p.add_argument("--per-point", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=int(os.environ.get("OPTIMA_WORKERS", "1")))
    p.add_argument("--out-dir", default="results/analysis")
    args = p.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for item in args.settings.split(","):
        n, m = (int(v) for v in item.lower().split("x"))
        curve = analyze_search_space(n, m, 1000.0, 100.0, cp_grid(args.grid), args.per_point,
                                     seed=args.seed, workers=args.workers)
        path = out / f"ratios_n{n}_m{m}.csv"
        path.write_text(curve.to_csv())
        best = int(curve.optimal_ratio.argmin())
        print(f"n={n} m={m}: min optimal ratio {curve.optimal_ratio[best]:.6f} at cp={curve.cp_grid[best]:g} -> {path}")


if __name__ == "__main__":
    main()
