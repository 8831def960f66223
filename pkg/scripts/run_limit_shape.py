"""Fraction of runs whose occupied interval lies within eps of [-n/2, n/2].

    python scripts/run_limit_shape.py --ns 50 100 200 400 --eps 0.1 --trials 1000
"""

import argparse
from fractions import Fraction

from ptopple.montecarlo import BatchParams, default_workers, run_batch
from ptopple.verify import in_limit_window


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--eps", type=Fraction, default=Fraction(1, 10))
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=default_workers())
    args = ap.parse_args()

    print(f"{'n':>5} {'L/n':>8} {'R/n':>8} {'in window':>10}")
    for n in args.ns:
        s = run_batch(BatchParams(n, args.p, args.trials, base_seed=args.seed, workers=args.workers,
                                  keep_records=True))
        hits = sum(in_limit_window(int(l), int(r), n, args.eps) for l, r in s.records[:, :2])
        print(f"{n:5d} {s.stats['L'].mean / n:8.4f} {s.stats['R'].mean / n:8.4f} {hits / args.trials:10.4f}")


if __name__ == "__main__":
    main()
