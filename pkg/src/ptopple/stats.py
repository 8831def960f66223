"""Statistical acceptance primitives: normal law, KS, chi-square, total variation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import Callable, Mapping, Optional

import numpy as np
from scipy.stats import chi2

from .errors import ExpectedTooSmall, NonPositiveVariance, TooFewSamples

# Asymptotic Kolmogorov critical coefficients c(alpha) = sqrt(-ln(alpha / 2) / 2)
# (Smirnov's limiting distribution, leading term), so the threshold on D is
# c(alpha) / sqrt(m).
KS_COEFFICIENTS = {0.05: 1.358, 0.01: 1.628, 0.001: 1.949}
KS_MIN_SAMPLES = 50


@dataclass
class TestReport:
    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    threshold: float
    passed: bool
    sample_size: int
    parameters: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.name}: statistic={self.statistic:.6g} threshold={self.threshold:.6g}"


def _check_variance(variance: float) -> None:
    if not variance > 0:
        raise NonPositiveVariance(f"variance must be positive, got {variance!r}")


def normal_cdf(x: float, mean: float = 0.0, variance: float = 1.0) -> float:
    """Normal distribution function; stdlib ``erf``-based, absolute error far below 1.5e-7."""
    _check_variance(variance)
    return NormalDist(mean, math.sqrt(variance)).cdf(x)


def normal_pdf(x: float, mean: float = 0.0, variance: float = 1.0) -> float:
    _check_variance(variance)
    return NormalDist(mean, math.sqrt(variance)).pdf(x)


def normal_ppf(q: float, mean: float = 0.0, variance: float = 1.0) -> float:
    _check_variance(variance)
    return NormalDist(mean, math.sqrt(variance)).inv_cdf(q)


def ks_critical(alpha: float, m: int) -> float:
    try:
        return KS_COEFFICIENTS[alpha] / math.sqrt(m)
    except KeyError:
        raise ValueError(f"alpha must be one of {sorted(KS_COEFFICIENTS)}, got {alpha!r}") from None


def ks_statistic(samples, cdf: Callable[[float], float]) -> float:
    x = np.sort(np.asarray(samples, dtype=float))
    m = x.size
    f = np.fromiter((cdf(v) for v in x), dtype=float, count=m)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - f), np.max(f - (i - 1) / m)))


def ks_test(samples, cdf: Callable[[float], float], alpha: float = 0.05,
            name: str = "ks", parameters: Optional[dict] = None) -> TestReport:
    """One-sample Kolmogorov-Smirnov test against a continuous distribution function."""
    m = len(samples)
    if m < KS_MIN_SAMPLES:
        raise TooFewSamples(f"KS test needs at least {KS_MIN_SAMPLES} samples, got {m}")
    threshold = ks_critical(alpha, m)
    d = ks_statistic(samples, cdf)
    return TestReport(name, d, threshold, d <= threshold, m, dict(parameters or {}, alpha=alpha))


def ks_statistic_lattice(samples, cdf: Callable[[float], float], spacing: float) -> float:
    """KS distance to the law of ``cdf`` rounded to the lattice the samples live on.

    Each lattice point ``u`` carries the reference mass of ``[u - h/2, u + h/2)``,
    so the reference CDF is the step function ``G(u) = cdf(u + h/2)``.  The sup
    is attained at an observed point (comparing ``G(u)``) or just before one
    (comparing ``G(u-) = cdf(u - h/2)``).
    """
    x = np.sort(np.asarray(samples, dtype=float))
    m = x.size
    u = np.unique(x)
    upper = np.searchsorted(x, u, side="right") / m
    lower = np.searchsorted(x, u, side="left") / m
    half = spacing / 2.0
    g_hi = np.fromiter((cdf(v + half) for v in u), dtype=float, count=u.size)
    g_lo = np.fromiter((cdf(v - half) for v in u), dtype=float, count=u.size)
    return float(max(np.max(np.abs(upper - g_hi)), np.max(np.abs(lower - g_lo))))


def ks_test_lattice(samples, cdf, spacing: float, alpha: float = 0.05,
                    name: str = "ks_lattice", parameters: Optional[dict] = None) -> TestReport:
    """KS test of lattice-valued samples, continuous critical values (conservative)."""
    m = len(samples)
    if m < KS_MIN_SAMPLES:
        raise TooFewSamples(f"KS test needs at least {KS_MIN_SAMPLES} samples, got {m}")
    threshold = ks_critical(alpha, m)
    d = ks_statistic_lattice(samples, cdf, spacing)
    params = dict(parameters or {}, alpha=alpha, spacing=spacing)
    return TestReport(name, d, threshold, d <= threshold, m, params)


def pool_categories(expected_counts: Mapping, min_expected: float = 5.0) -> list:
    """Group category keys so every group has expected count >= ``min_expected``.

    All categories below the minimum are pooled together; if that pool is still
    too small, the smallest remaining categories join it.
    """
    items = sorted(expected_counts.items(), key=lambda kv: (kv[1], repr(kv[0])))
    small = [k for k, e in items if e < min_expected]
    big = [k for k, e in items if e >= min_expected]
    groups = [[k] for k in big]
    if small:
        pool = list(small)
        total = sum(expected_counts[k] for k in pool)
        while total < min_expected and groups:
            extra = groups.pop(0)
            pool += extra
            total += sum(expected_counts[k] for k in extra)
        if total < min_expected:
            raise ExpectedTooSmall(f"pooled expected count {total:.3g} < {min_expected}")
        groups.append(pool)
    if len(groups) < 2:
        raise ExpectedTooSmall("fewer than two categories remain after pooling")
    return groups


def chi_square_gof(observed: Mapping, expected: Mapping, alpha: float = 0.01,
                   name: str = "chi_square", parameters: Optional[dict] = None,
                   min_expected: float = 5.0) -> TestReport:
    """Pearson goodness of fit of observed counts to category probabilities."""
    expected = {k: float(v) for k, v in expected.items()}
    if abs(sum(expected.values()) - 1.0) > 1e-12:
        raise ValueError(f"expected probabilities sum to {sum(expected.values())!r}, not 1")
    total = sum(observed.values())
    stray = [k for k, o in observed.items() if o and expected.get(k, 0.0) == 0.0]
    counts = {k: total * q for k, q in expected.items() if q > 0}
    groups = pool_categories(counts, min_expected)
    stat = 0.0
    for g in groups:
        e = sum(counts[k] for k in g)
        o = sum(observed.get(k, 0) for k in g)
        stat += (o - e) ** 2 / e
    if stray:
        stat = math.inf
    df = len(groups) - 1
    threshold = float(chi2.ppf(1.0 - alpha, df))
    params = dict(parameters or {}, alpha=alpha)
    details = {"df": df, "groups": len(groups), "stray_categories": len(stray)}
    return TestReport(name, stat, threshold, stat <= threshold, int(total), params, details)


def tv_distance(a: Mapping, b: Mapping) -> float:
    keys = set(a) | set(b)
    return 0.5 * sum(abs(float(a.get(k, 0)) - float(b.get(k, 0))) for k in keys)


def binomial_interval(prob: float, trials: int, z: float = 4.0) -> tuple:
    """``prob +/- z * sqrt(prob (1 - prob) / trials)``."""
    half = z * math.sqrt(prob * (1.0 - prob) / trials)
    return prob - half, prob + half


def empirical_law(keys) -> dict:
    """Empirical probability of each distinct key."""
    out: dict = {}
    for k in keys:
        out[k] = out.get(k, 0) + 1
    m = sum(out.values())
    return {k: c / m for k, c in out.items()}
