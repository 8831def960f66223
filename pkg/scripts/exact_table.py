"""Exact E[K], P(hole) and state counts for small n, as rationals and decimals.

    python scripts/exact_table.py --p 1/2 --n-max 6
"""

import argparse
from fractions import Fraction

from ptopple import oracle


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=Fraction, default=Fraction(1, 2))
    ap.add_argument("--n-max", type=int, default=6)
    args = ap.parse_args()

    print(f"p = {args.p}")
    print(f"{'n':>3} {'states':>7} {'E[K]':>28} {'E[K]/n^3':>10} {'P(hole)':>10}")
    for n in range(1, args.n_max + 1):
        d = oracle.absorption_distribution(n, args.p, n_max=args.n_max)
        ek = d.expected_topplings
        hole = oracle.marginals(d)["hole_present"]
        print(f"{n:3d} {d.n_states:7d} {str(ek):>28} {float(ek) / n**3:10.5f} {float(hole):10.5f}")


if __name__ == "__main__":
    main()
