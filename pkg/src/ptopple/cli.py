"""``ptopple`` command line: simulate, verify, oracle, plotdata.

Exit codes: 0 success, 1 usage error, 2 invariant or test failure, 3 resource limit.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, oracle, verify
from .core import PolicyKind, TopplePolicy
from .errors import MissingSamples, SandpileError, StateLimitExceeded, TrialFailure
from .montecarlo import BatchParams, BatchSummary, Histogram, default_workers, run_batch, write_records_csv
from .oracle import N_MAX
from .stats import normal_pdf

EXIT_OK, EXIT_USAGE, EXIT_FAILURE, EXIT_LIMIT = 0, 1, 2, 3
SEED_ENV = "SANDPILE_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _probability(text: str) -> str:
    try:
        q = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"--p: cannot parse {text!r}") from None
    if not 0 < q < 1:
        raise argparse.ArgumentTypeError(f"--p: must lie strictly between 0 and 1, got {text}")
    return text


def _positive(flag: str):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: expected an integer, got {text!r}") from None
        if v < 1:
            raise argparse.ArgumentTypeError(f"{flag}: must be at least 1, got {v}")
        return v
    return parse


def _policy(text: str) -> TopplePolicy:
    try:
        return TopplePolicy.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--policy: expected leftmost, fifo or random[:seed], got {text!r}") from None


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seed: expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("--seed: must be non-negative")
    return v


def default_seed() -> int:
    text = os.environ.get(SEED_ENV)
    if text is None:
        return verify.DEFAULT_SEED
    try:
        return _seed(text)
    except argparse.ArgumentTypeError:
        raise UsageError(f"{SEED_ENV}: expected a non-negative integer, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ptopple", description="Single-source p-toppling sandpile on Z.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, n_required=True, trials_default: Optional[int] = 1000):
        sp.add_argument("--n", type=_positive("--n"), required=n_required)
        sp.add_argument("--p", type=_probability, required=n_required)
        sp.add_argument("--trials", type=_positive("--trials"), default=trials_default)
        sp.add_argument("--seed", type=_seed, default=None, help=f"default: ${SEED_ENV} or {verify.DEFAULT_SEED}")
        sp.add_argument("--workers", type=_positive("--workers"), default=None)

    sim = sub.add_parser("simulate", help="run a batch and write summary JSON (and per-trial CSV)")
    common(sim)
    sim.add_argument("--policy", type=_policy, default=TopplePolicy.leftmost())
    sim.add_argument("--out", type=Path, default=Path("."), help="output directory")
    sim.add_argument("--format", choices=("csv", "json"), default="csv")

    ver = sub.add_parser("verify", help="run named acceptance checks")
    ver.add_argument("checks", nargs="+", choices=verify.CHECKS + ("all",))
    common(ver, n_required=False, trials_default=None)
    ver.add_argument("--seeds", type=_positive("--seeds"), default=None)
    ver.add_argument("--out", type=Path, default=None, help="JSON bundle of reports")

    orc = sub.add_parser("oracle", help="exact law of the final configuration for small n")
    orc.add_argument("--n", type=_positive("--n"), required=True)
    orc.add_argument("--p", type=_probability, required=True, help="rational form a/b")
    orc.add_argument("--policy", type=_policy, default=TopplePolicy.leftmost())
    orc.add_argument("--n-max", type=_positive("--n-max"), default=N_MAX)
    orc.add_argument("--crosscheck", type=_positive("--crosscheck"), default=None, metavar="TRIALS")
    orc.add_argument("--seed", type=_seed, default=None)
    orc.add_argument("--workers", type=_positive("--workers"), default=None)
    orc.add_argument("--out", type=Path, default=None)

    plot = sub.add_parser("plotdata", help="histogram densities against the Gaussian limit")
    plot.add_argument("--summary", type=Path, default=None, help="summary JSON from simulate")
    common(plot, n_required=False)
    plot.add_argument("--bins", type=_positive("--bins"), default=61)
    plot.add_argument("--observable", choices=("right_fluct", "left_fluct"), default="right_fluct")
    plot.add_argument("--out", type=Path, default=Path("plotdata.csv"))
    return parser


def _config(args) -> dict:
    """Every flag that affects the numbers; output locations are left out."""
    out = {}
    for k, v in sorted(vars(args).items()):
        if k == "out":
            continue
        if isinstance(v, (Path, TopplePolicy)):
            v = str(v)
        out[k] = v
    return out


def header(args) -> dict:
    return {"tool": "ptopple", "version": __version__, "command": args.command, "config": _config(args)}


def _write_json(path: Optional[Path], body: dict) -> None:
    text = json.dumps(body, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_simulate(args) -> int:
    params = BatchParams(args.n, float(Fraction(args.p)), args.trials, base_seed=args.seed,
                         policy=args.policy, workers=args.workers, keep_records=args.format == "csv")
    summary = run_batch(params)
    args.out.mkdir(parents=True, exist_ok=True)
    head = header(args)
    head["batch"] = params.to_dict()
    if args.format == "csv":
        write_records_csv(summary, args.out / "trials.csv")
        head["files"] = ["summary.json", "trials.csv"]
    _write_json(args.out / "summary.json", summary.to_dict(head))
    k = summary.stats["scaled_K"]
    print(f"{summary.count} trials, mean K/n^3 = {k.mean:.6g}, wrote {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = verify.CHECKS if "all" in args.checks else tuple(dict.fromkeys(args.checks))
    p = float(Fraction(args.p)) if args.p is not None else None
    reports = []
    for name in names:
        reports += verify.run_check(name, n=args.n, p=p, trials=args.trials, seed=args.seed,
                                    workers=args.workers, seeds=args.seeds)
    for r in reports:
        print(r.line() + ("  (diagnostic)" if r.details.get("diagnostic") else ""))
    ok = verify.passed(reports)
    if args.out is not None:
        _write_json(args.out, {"header": header(args), "pass": ok, "reports": [r.to_dict() for r in reports]})
    print("ALL PASS" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_oracle(args) -> int:
    if "/" not in args.p:
        raise UsageError(f"--p: the exact oracle needs a rational a/b, got {args.p!r}")
    if args.policy.kind is PolicyKind.RANDOM:
        raise UsageError("--policy: the oracle supports leftmost and fifo")
    dist = oracle.absorption_distribution(args.n, Fraction(args.p), args.policy, n_max=args.n_max)
    body = json.loads(dist.to_json(header(args)))
    ok = True
    if args.crosscheck:
        reports = verify.check_crosscheck(args.n, (float(Fraction(args.p)),), args.crosscheck,
                                          seed=args.seed, workers=args.workers)
        body["crosscheck"] = [r.to_dict() for r in reports]
        ok = all(r.passed for r in reports)
        for r in reports:
            print(r.line(), file=sys.stderr)
    _write_json(args.out, body)
    return EXIT_OK if ok else EXIT_FAILURE


def density_rows(hist: Histogram, p: float) -> list:
    """``(bin_center, empirical_density, theoretical_density)`` for every bin, empty ones included."""
    inside = int(sum(hist.counts))
    if inside == 0:
        raise MissingSamples("histogram has no samples inside its range")
    var = (1.0 - p) / 12.0
    rows = []
    for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
        lo, hi = float(lo), float(hi)
        center = 0.5 * (lo + hi)
        rows.append((center, int(c) / (inside * (hi - lo)), normal_pdf(center, 0.0, var)))
    return rows


def cmd_plotdata(args) -> int:
    if args.summary is not None:
        try:
            data = json.loads(args.summary.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"--summary: no such file {args.summary}") from None
        summary = BatchSummary.from_dict(data)
        p = float(summary.params["p"])
    else:
        if args.n is None or args.p is None:
            raise UsageError("plotdata needs --summary or both --n and --p")
        p = float(Fraction(args.p))
        summary = run_batch(BatchParams(args.n, p, args.trials, base_seed=args.seed,
                                        workers=args.workers, bins=args.bins))
    hist = summary.histograms.get(args.observable)
    if hist is None:
        raise MissingSamples(f"no histogram for {args.observable}")
    rows = density_rows(hist, p)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("bin_center", "empirical_density", "theoretical_density"))
        for row in rows:
            w.writerow([repr(v) for v in row])
    head = header(args)
    head["source"] = summary.params
    head["underflow"], head["overflow"] = hist.underflow, hist.overflow
    _write_json(args.out.with_name(args.out.name + ".json"), {"header": head})
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "oracle": cmd_oracle, "plotdata": cmd_plotdata}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = default_seed()
        if getattr(args, "workers", 0) is None:
            args.workers = default_workers()
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ptopple: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StateLimitExceeded as exc:
        print(f"ptopple: {exc.code}: {exc}; the exact oracle is limited to n <= {N_MAX} "
              f"(raise --n-max at your own cost, or use simulate)", file=sys.stderr)
        return EXIT_LIMIT
    except TrialFailure as exc:
        print(f"ptopple: {exc} -- rerun with this seed to reproduce", file=sys.stderr)
        return EXIT_FAILURE
    except SandpileError as exc:
        print(f"ptopple: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
