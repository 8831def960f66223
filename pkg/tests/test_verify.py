from fractions import Fraction

import numpy as np
from hypothesis import given, strategies as st

from ptopple import verify


def test_limit_window_examples():
    eps = Fraction(1, 5)
    assert verify.in_limit_window(-50, 49, 100, eps)
    assert verify.in_limit_window(-60, 40, 100, eps)
    assert not verify.in_limit_window(-61, 39, 100, eps)
    assert not verify.in_limit_window(-39, 61, 100, eps)


@given(st.integers(-300, 0), st.integers(0, 300), st.integers(10, 400))
def test_limit_window_is_set_inclusion(left, right, n):
    eps = Fraction(1, 10)
    interval = set(range(left, right + 1))
    inner = {v for v in range(-n, n + 1) if abs(v) <= n * (1 - eps) / 2}
    outer_ok = all(abs(v) <= n * (1 + eps) / 2 for v in (left, right))
    assert verify.in_limit_window(left, right, n, eps) == (inner <= interval and outer_ok)


@given(st.integers(-20, 20), st.fractions(min_value=Fraction(1, 50), max_value=Fraction(49, 50)))
def test_toppling_moments(site, p):
    assert verify.toppling_moments(site, p) == (0, 2 * p * (1 - p), 2 * p)


def test_lrh_law_from_records():
    rec = np.array([[-1, 0, 0, 0], [-1, 1, 0, 1], [-1, 0, 0, 0]])
    assert verify.lrh_law_from_records(rec) == {(-1, 0, None): 2, (-1, 1, 0): 1}


def test_diagnostics_do_not_decide():
    from ptopple.stats import TestReport
    bad = TestReport("d", 1, 0, False, 1, details={"diagnostic": True})
    good = TestReport("g", 0, 0, True, 1)
    assert verify.passed([good, bad]) and not verify.passed([bad, TestReport("x", 1, 0, False, 1)])


def test_small_clt_run_reports_every_part():
    verify.clear_cache()
    reports = verify.check_clt(((30, 0.5),), trials=200, seed=3)
    names = [r.name for r in reports]
    for side in ("left_fluct", "right_fluct"):
        for part in ("mean", "variance", "KS"):
            assert f"{side} {part} n=30 p=0.5" in names
    assert any(r.details.get("diagnostic") for r in reports)
