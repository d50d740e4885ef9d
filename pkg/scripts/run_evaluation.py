"""Accuracy and mean run time of DP and the annealing settings against the exhaustive optimum."""
import argparse
from pathlib import Path

from optima.analysis import EVAL_PRESETS, evaluate_solvers, evaluation_csv, accuracy_solvers


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--preset", choices=sorted(EVAL_PRESETS), default="desk")
    p.add_argument("--instances", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/evaluation.csv")
    args = p.parse_args()

    preset = EVAL_PRESETS[args.preset]
    rows = evaluate_solvers(preset["configs"], accuracy_solvers(), args.instances or preset["instances"], args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(evaluation_csv(rows))
    width = max(len(r.params) for r in rows)
    for r in rows:
        c = r.config
        print(f"n={c.n:<2} m={c.m} cp={c.cp:<4g} {r.solver:<3} {r.params:<{width}} "
              f"acc={r.accuracy:6.3f} {r.mean_ms:9.3f} ms")


if __name__ == "__main__":
    main()
