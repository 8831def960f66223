"""Boundary fluctuations against N(0, (1-p)/12), with the finite-n width term split off.

For each n it reports the mean and variance of (R - n/2)/sqrt(n), the width term
(R - L - n)/(2 sqrt(n)) it contains, and the centre (L + R)/(2 sqrt(n)) that is left
once the width term is removed, together with plain and lattice-aware KS distances.

    python scripts/run_boundary_clt.py --ns 50 200 800 --p 0.5 --trials 2000
"""

import argparse
import math
from statistics import NormalDist

import numpy as np

from ptopple.montecarlo import BatchParams, default_workers, run_batch
from ptopple.stats import ks_critical, ks_statistic, ks_statistic_lattice


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=default_workers())
    args = ap.parse_args()

    var = (1 - args.p) / 12
    cdf = NormalDist(0, math.sqrt(var)).cdf
    print(f"target variance {var:.6f}; KS critical value at alpha=0.001: {ks_critical(0.001, args.trials):.4f}")
    print(f"{'n':>5} {'mean R':>9} {'width term':>10} {'var R':>9} {'D R':>7} {'D R lat':>8} "
          f"{'mean ctr':>9} {'var ctr':>9} {'D ctr lat':>9}")
    for n in args.ns:
        s = run_batch(BatchParams(n, args.p, args.trials, base_seed=args.seed, workers=args.workers,
                                  keep_records=True))
        left, right = s.records[:, 0].astype(float), s.records[:, 1].astype(float)
        r = (right - n / 2) / math.sqrt(n)
        width_term = (right - left - n) / (2 * math.sqrt(n))
        centre = (left + right) / (2 * math.sqrt(n))
        print(f"{n:5d} {r.mean():9.4f} {width_term.mean():10.4f} {r.var(ddof=1):9.5f} "
              f"{ks_statistic(r, cdf):7.4f} {ks_statistic_lattice(r, cdf, 1 / math.sqrt(n)):8.4f} "
              f"{centre.mean():9.4f} {centre.var(ddof=1):9.5f} "
              f"{ks_statistic_lattice(centre, cdf, 1 / (2 * math.sqrt(n))):9.4f}")
        assert np.allclose(r, centre + width_term)


if __name__ == "__main__":
    main()
