"""Named verification checks shared by ``ptopple verify`` and the acceptance tests.

Each check returns a list of :class:`~ptopple.stats.TestReport`.  Reports whose
``details["diagnostic"]`` is true explain a result but do not decide it.
"""

from __future__ import annotations

import math
from fractions import Fraction
from statistics import NormalDist
from typing import Iterable, Optional

import numpy as np

from . import oracle, rng
from .core import (
    Configuration,
    Instruction,
    InstructionSource,
    TopplePolicy,
    stabilize,
    stabilize_reference,
    topple,
)
from .errors import SandpileError, TrialFailure
from .montecarlo import BatchParams, BatchSummary, run_batch
from .observables import center_of_mass, square_center_of_mass
from .stats import TestReport, chi_square_gof, ks_test, ks_test_lattice, tv_distance

CHECKS = ("structure", "abelian", "moments", "oracle", "lln", "clt")
DEFAULT_SEED = 1

_batches: dict = {}


def cached_batch(n: int, p: float, trials: int, seed: int, workers: int = 1) -> BatchSummary:
    """Run (or reuse) a LEFTMOST batch with samples and records kept.

    The scaled-moment and boundary checks share their n=200 runs this way.
    """
    key = (n, float(p), trials, seed)
    if key not in _batches:
        _batches[key] = run_batch(BatchParams(n, p, trials, base_seed=seed, workers=workers,
                                              retain_samples=True, keep_records=True))
    return _batches[key]


def clear_cache() -> None:
    _batches.clear()


def passed(reports: Iterable[TestReport]) -> bool:
    return all(r.passed for r in reports if not r.details.get("diagnostic"))


def _diagnostic(report: TestReport) -> TestReport:
    report.details["diagnostic"] = True
    return report


# -- structure -------------------------------------------------------------

STRUCTURE_GRID = dict(n=(2, 5, 20, 100), p=(0.3, 0.5, 0.7), trials=10_000)


def check_structure(ns=STRUCTURE_GRID["n"], ps=STRUCTURE_GRID["p"],
                    trials=STRUCTURE_GRID["trials"], seed=DEFAULT_SEED, workers=1,
                    traced_trials=200) -> list:
    """Stability, n occupied sites, at most one hole, width n-1 or n, no adjacent toppled vacancies.

    The kernel checks every criterion per trial (the adjacency test at every
    toppling); the widths are re-derived here from the kept records.  For
    n <= 20 a traced subset is re-run on the Python engine with a full scan of
    the configuration after every step.
    """
    reports = []
    for n in ns:
        for p in ps:
            params = dict(n=n, p=p, trials=trials, seed=seed)
            violations = 0
            detail = {}
            try:
                summary = run_batch(BatchParams(n, p, trials, base_seed=seed, workers=workers, keep_records=True))
                rec = summary.records
                width = rec[:, 1] - rec[:, 0]
                holes = rec[:, 3]
                violations += int(np.count_nonzero((width != n - 1) & (width != n)))
                violations += int(np.count_nonzero(width != n - 1 + holes))
                violations += int(np.count_nonzero(holes > 1))
                detail = {"hole_frequency": float(holes.mean()),
                          "width_values": sorted(int(w) for w in np.unique(width))}
            except TrialFailure as exc:
                violations += 1
                detail = {"error": str(exc), "seed": exc.seed, "trial_index": exc.trial_index}
            if n <= 20 and traced_trials:
                try:
                    run_batch(BatchParams(n, p, min(traced_trials, trials), base_seed=seed, traced=True))
                except TrialFailure as exc:
                    violations += 1
                    detail["traced_error"] = str(exc)
            reports.append(TestReport(f"structure n={n} p={p}", violations, 0, violations == 0,
                                      trials, params, detail))
    return reports


# -- abelian ---------------------------------------------------------------

ABELIAN_GRID = dict(n=(10, 30, 50), p=(0.3, 0.7), seeds=100)


def check_abelian(ns=ABELIAN_GRID["n"], ps=ABELIAN_GRID["p"], seeds=ABELIAN_GRID["seeds"],
                  seed=DEFAULT_SEED) -> list:
    """Final counts and odometer agree across LEFTMOST, FIFO and RANDOM on the same stacks."""
    policies = (TopplePolicy.leftmost(), TopplePolicy.fifo(), TopplePolicy.random(seed))
    reports = []
    for n in ns:
        for p in ps:
            mismatches = 0
            for i in range(seeds):
                src = InstructionSource(rng.trial_seed(seed, i), p)
                outs = [stabilize(n, src, pol) for pol in policies]
                ref = outs[0]
                mismatches += any(o.final_counts != ref.final_counts or o.odometer != ref.odometer
                                  or o.topplings != ref.topplings for o in outs[1:])
            reports.append(TestReport(f"abelian n={n} p={p}", mismatches, 0, mismatches == 0, seeds,
                                      dict(n=n, p=p, seeds=seeds, seed=seed)))
    return reports


# -- exact identities and moments ------------------------------------------

IDENTITY_PS = (Fraction(1, 10), Fraction(1, 2), Fraction(9, 10))
IDENTITY_SITES = range(-3, 4)


def toppling_moments(site: int, p: Fraction) -> tuple:
    """Exact ``(E dM, E dM^2, E dS)`` of one toppling at ``site``.

    Increments come from applying each instruction to a configuration and
    recomputing the centre of mass, not from a closed-form formula.
    """
    em = em2 = es = Fraction(0)
    start = {site: 2}
    m0, s0 = center_of_mass(start), square_center_of_mass(start)
    for instr in Instruction:
        config = topple(Configuration.from_counts(start, radius=abs(site) + 1), site, instr)
        dm = center_of_mass(config) - m0
        ds = square_center_of_mass(config) - s0
        w = instr.probability(p)
        em += w * dm
        em2 += w * dm * dm
        es += w * ds
    return em, em2, es


def check_identities(ps=IDENTITY_PS, sites=IDENTITY_SITES) -> list:
    reports = []
    for p in ps:
        bad = []
        for v in sites:
            em, em2, es = toppling_moments(v, p)
            if (em, em2, es) != (0, 2 * p * (1 - p), 2 * p):
                bad.append(v)
        reports.append(TestReport(f"toppling identities p={p}", len(bad), 0, not bad, len(sites),
                                  dict(p=str(p)), {"failing_sites": bad}))
    return reports


MOMENT_GRID = dict(n=200, p=(0.3, 0.5, 0.7), trials=5000)


def _relative_report(name, value, target, tol, count, params) -> TestReport:
    err = abs(value - target) / target
    return TestReport(name, err, tol, err <= tol, count, params,
                      {"value": value, "target": target})


def check_scaled_moments(n=MOMENT_GRID["n"], ps=MOMENT_GRID["p"], trials=MOMENT_GRID["trials"],
                         seed=DEFAULT_SEED, workers=1) -> list:
    """Means of K/n^3, S/n^3, M^2/n^3 against 1/(24p), 1/12, (1-p)/12; mean of M near 0."""
    reports = []
    for p in ps:
        s = cached_batch(n, p, trials, seed, workers)
        params = dict(n=n, p=p, trials=trials, seed=seed)
        reports.append(_relative_report(f"K/n^3 n={n} p={p}", s.stats["scaled_K"].mean,
                                        1 / (24 * p), 0.10, trials, params))
        reports.append(_relative_report(f"S/n^3 n={n} p={p}", s.stats["scaled_S"].mean,
                                        1 / 12, 0.10, trials, params))
        reports.append(_relative_report(f"M^2/n^3 n={n} p={p}", s.stats["scaled_M2"].mean,
                                        (1 - p) / 12, 0.15, trials, params))
        m = s.stats["M"]
        bound = 4 * m.stddev / math.sqrt(m.count)
        reports.append(TestReport(f"mean M n={n} p={p}", abs(m.mean), bound, abs(m.mean) <= bound,
                                  m.count, params, {"mean": m.mean}))
    return reports


# -- oracle ----------------------------------------------------------------

ORACLE_PS = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))


def check_oracle_identities(n_max=5, ps=ORACLE_PS, fifo_n_max=4) -> list:
    reports = []
    for n in range(1, n_max + 1):
        for p in ps:
            d = oracle.absorption_distribution(n, p)
            ek, mo = d.expected_topplings, d.moments
            failures = []
            if d.total_probability != 1:
                failures.append("total probability")
            if not ek <= Fraction(n**3) / (2 * p):
                failures.append("E[K] <= n^3/(2p)")
            if mo["E[M^2]"] != 2 * p * (1 - p) * ek:
                failures.append("E[M^2] = 2p(1-p)E[K]")
            if not mo["E[M^2]"] <= (1 - p) * n**3:
                failures.append("E[M^2] <= (1-p)n^3")
            if mo["E[S]"] != 2 * p * ek:
                failures.append("E[S] = 2pE[K]")
            if mo["E[M]"] != 0:
                failures.append("E[M] = 0")
            if any(d.support.get(oracle.mirror(st)) != q for st, q in d.support.items()):
                failures.append("reflection symmetry")
            try:
                oracle.marginals(d)
            except SandpileError:
                failures.append("hole structure")
            if n <= fifo_n_max:
                f = oracle.absorption_distribution(n, p, TopplePolicy.fifo())
                if f.support != d.support or f.expected_topplings != ek:
                    failures.append("FIFO law")
            reports.append(TestReport(f"oracle identities n={n} p={p}", len(failures), 0, not failures,
                                      1, dict(n=n, p=str(p)),
                                      {"failures": failures, "E[K]": str(ek), "states": d.n_states}))
    return reports


CROSSCHECK_GRID = dict(n=4, p=(0.3, 0.5), trials=100_000)


def lrh_law_from_records(records) -> dict:
    counts: dict = {}
    for left, right, hole, has_hole in records[:, :4]:
        key = (int(left), int(right), int(hole) if has_hole else None)
        counts[key] = counts.get(key, 0) + 1
    return counts


def check_crosscheck(n=CROSSCHECK_GRID["n"], ps=CROSSCHECK_GRID["p"], trials=CROSSCHECK_GRID["trials"],
                     seed=DEFAULT_SEED, workers=1, tv_max=0.02, alpha=0.01) -> list:
    reports = []
    for p in ps:
        exact = oracle.marginals(oracle.absorption_distribution(n, oracle.parse_probability(p)))["lrh"]
        summary = run_batch(BatchParams(n, float(p), trials, base_seed=seed, workers=workers, keep_records=True))
        observed = lrh_law_from_records(summary.records)
        empirical = {k: c / trials for k, c in observed.items()}
        params = dict(n=n, p=float(p), trials=trials, seed=seed)
        tv = tv_distance(empirical, exact)
        reports.append(TestReport(f"tv(L,R,hole) n={n} p={p}", tv, tv_max, tv <= tv_max, trials, params))
        reports.append(chi_square_gof(observed, exact, alpha, name=f"chi2(L,R,hole) n={n} p={p}",
                                      parameters=params))
    return reports


# -- limit shape -----------------------------------------------------------

LLN_CASES = ((100, Fraction(1, 5)), (400, Fraction(1, 10)))


def in_limit_window(left: int, right: int, n: int, eps: Fraction) -> bool:
    """``[-n(1-e)/2, n(1-e)/2] & Z  <=  [L, R]  <=  [-n(1+e)/2, n(1+e)/2]``, exactly."""
    inner = Fraction(n) * (1 - eps) / 2
    outer = Fraction(n) * (1 + eps) / 2
    return (left <= math.ceil(-inner) and right >= math.floor(inner)
            and left >= -outer and right <= outer)


def check_lln(cases=LLN_CASES, p=0.5, trials=2000, seed=DEFAULT_SEED, workers=1, level=0.99) -> list:
    reports = []
    for n, eps in cases:
        eps = Fraction(str(eps)) if isinstance(eps, float) else Fraction(eps)
        s = run_batch(BatchParams(n, p, trials, base_seed=seed, workers=workers, keep_records=True))
        hits = sum(in_limit_window(int(l), int(r), n, eps) for l, r in s.records[:, :2])
        frac = hits / trials
        reports.append(TestReport(f"limit shape n={n} eps={eps}", frac, level, frac >= level, trials,
                                  dict(n=n, p=p, eps=str(eps), trials=trials, seed=seed),
                                  {"L_over_n_mean": s.stats["L"].mean / n, "R_over_n_mean": s.stats["R"].mean / n}))
    return reports


# -- boundary CLT ----------------------------------------------------------

CLT_CASES = ((200, 0.5), (200, 0.3))


def check_clt(cases=CLT_CASES, trials=5000, seed=DEFAULT_SEED, workers=1, alpha=0.001,
              var_tol=0.15, diagnostics=True) -> list:
    """Mean, variance and KS of both rescaled boundaries against N(0, (1-p)/12).

    Diagnostics quantify the finite-n effects: the lattice-aware KS distance and
    the centre ``(L + R) / (2 sqrt n)``, which equals each boundary minus its
    deterministic width term ``(R - L - n) / (2 sqrt n)``.
    """
    reports = []
    for n, p in cases:
        var = (1 - p) / 12
        ref = NormalDist(0.0, math.sqrt(var))
        s = cached_batch(n, p, trials, seed, workers)
        params = dict(n=n, p=p, trials=trials, seed=seed, alpha=alpha)
        cols = {"left_fluct": s.samples["left_fluct"], "right_fluct": s.samples["right_fluct"]}
        for name, x in cols.items():
            st = s.stats[name]
            bound = 4 * st.stddev / math.sqrt(st.count)
            reports.append(TestReport(f"{name} mean n={n} p={p}", abs(st.mean), bound,
                                      abs(st.mean) <= bound, st.count, params, {"mean": st.mean}))
            reports.append(_relative_report(f"{name} variance n={n} p={p}", st.variance, var, var_tol,
                                            st.count, params))
            reports.append(ks_test(x, ref.cdf, alpha, name=f"{name} KS n={n} p={p}", parameters=params))
            if diagnostics:
                reports.append(_diagnostic(ks_test_lattice(
                    x, ref.cdf, 1 / math.sqrt(n), alpha, name=f"diagnostic {name} lattice KS n={n} p={p}",
                    parameters=params)))
        if diagnostics:
            rec = s.records
            center = (rec[:, 0] + rec[:, 1]) / (2 * math.sqrt(n))
            no_hole = 1.0 - float(rec[:, 3].mean())
            predicted = no_hole / (2 * math.sqrt(n))
            reports.append(_diagnostic(TestReport(
                f"diagnostic width term n={n} p={p}", predicted, 0.0, True, trials, params,
                {"right_mean_predicted": -predicted, "left_mean_predicted": predicted,
                 "right_mean": s.stats["right_fluct"].mean, "left_mean": s.stats["left_fluct"].mean})))
            bound = 4 * center.std(ddof=1) / math.sqrt(center.size)
            reports.append(_diagnostic(TestReport(
                f"diagnostic center mean n={n} p={p}", abs(float(center.mean())), bound,
                abs(float(center.mean())) <= bound, trials, params)))
            reports.append(_diagnostic(_relative_report(
                f"diagnostic center variance n={n} p={p}", float(center.var(ddof=1)), var, var_tol,
                trials, params)))
            reports.append(_diagnostic(ks_test_lattice(
                center, ref.cdf, 1 / (2 * math.sqrt(n)), alpha,
                name=f"diagnostic center lattice KS n={n} p={p}", parameters=params)))
    return reports


# -- dispatch --------------------------------------------------------------

def run_check(name: str, n: Optional[int] = None, p: Optional[float] = None,
              trials: Optional[int] = None, seed: int = DEFAULT_SEED, workers: int = 1,
              seeds: Optional[int] = None) -> list:
    """Run one named check; ``n``/``p``/``trials`` narrow it to a single case."""
    if name == "structure":
        return check_structure(ns=(n,) if n else STRUCTURE_GRID["n"], ps=(p,) if p else STRUCTURE_GRID["p"],
                               trials=trials or STRUCTURE_GRID["trials"], seed=seed, workers=workers)
    if name == "abelian":
        return check_abelian(ns=(n,) if n else ABELIAN_GRID["n"], ps=(p,) if p else ABELIAN_GRID["p"],
                             seeds=seeds or trials or ABELIAN_GRID["seeds"], seed=seed)
    if name == "moments":
        return check_identities() + check_scaled_moments(
            n=n or MOMENT_GRID["n"], ps=(p,) if p else MOMENT_GRID["p"],
            trials=trials or MOMENT_GRID["trials"], seed=seed, workers=workers)
    if name == "oracle":
        return check_oracle_identities() + check_crosscheck(
            n=n or CROSSCHECK_GRID["n"], ps=(p,) if p else CROSSCHECK_GRID["p"],
            trials=trials or CROSSCHECK_GRID["trials"], seed=seed, workers=workers)
    if name == "lln":
        cases = LLN_CASES if n is None else tuple((nn, e) for nn, e in LLN_CASES if nn == n) or ((n, Fraction(1, 5)),)
        return check_lln(cases, p=p or 0.5, trials=trials or 2000, seed=seed, workers=workers)
    if name == "clt":
        cases = CLT_CASES if n is None and p is None else ((n or 200, p or 0.5),)
        return check_clt(cases, trials=trials or 5000, seed=seed, workers=workers)
    raise ValueError(f"unknown check {name!r}; choose from {CHECKS}")
