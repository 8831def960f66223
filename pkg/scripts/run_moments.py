"""Scaled moments K/n^3, S/n^3, M^2/n^3 over a grid of n, next to their limits.

    python scripts/run_moments.py --ns 50 100 200 --ps 0.3 0.5 0.7 --trials 2000
"""

import argparse
import json

from ptopple.montecarlo import BatchParams, default_workers, run_batch


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--ps", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--json", help="also write the table here")
    args = ap.parse_args()

    rows = []
    print(f"{'n':>5} {'p':>5} {'K/n^3':>10} {'1/(24p)':>10} {'S/n^3':>10} {'M^2/n^3':>10} {'(1-p)/12':>10} {'P(hole)':>8}")
    for p in args.ps:
        for n in args.ns:
            s = run_batch(BatchParams(n, p, args.trials, base_seed=args.seed, workers=args.workers))
            row = dict(n=n, p=p, K=s.stats["scaled_K"].mean, S=s.stats["scaled_S"].mean,
                       M2=s.stats["scaled_M2"].mean, hole=s.stats["hole_present"].mean)
            rows.append(row)
            print(f"{n:5d} {p:5.2f} {row['K']:10.5f} {1 / (24 * p):10.5f} {row['S']:10.5f} "
                  f"{row['M2']:10.5f} {(1 - p) / 12:10.5f} {row['hole']:8.4f}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"config": vars(args), "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
