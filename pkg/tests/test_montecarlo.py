import csv
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ptopple import montecarlo as mc
from ptopple.core import LEFTMOST
from ptopple.errors import NonMonotoneEdges, SchemaMismatch, TrialFailure

floats = st.lists(st.floats(-1e3, 1e3), min_size=0, max_size=60)


@given(floats, floats)
def test_running_stats_merge_matches_two_pass(a, b):
    s = mc.RunningStats.of(a).merge(mc.RunningStats.of(b))
    both = np.array(a + b)
    assert s.count == both.size
    if both.size:
        assert s.mean == pytest.approx(both.mean(), rel=1e-9, abs=1e-9)
        assert s.min == both.min() and s.max == both.max()
    if both.size > 1:
        assert s.variance == pytest.approx(both.var(ddof=1), rel=1e-9, abs=1e-7)


@given(floats)
def test_push_equals_of(a):
    s = mc.RunningStats()
    for x in a:
        s.push(x)
    t = mc.RunningStats.of(a)
    assert s.count == t.count
    if a:
        assert s.mean == pytest.approx(t.mean, abs=1e-9)


def test_running_stats_round_trip():
    s = mc.RunningStats.of([1.0, 2.0, 4.0])
    t = mc.RunningStats.from_dict(json.loads(json.dumps(s.to_dict())))
    assert (t.count, t.mean, t.variance) == (s.count, s.mean, s.variance)


def test_histogram_edges_and_overflow():
    h = mc.histogram([-1.0, 0.0, 0.5, 1.0, 2.0, 3.0], [0.0, 1.0, 2.0])
    assert list(h.counts) == [2, 1]  # the right edge 2.0 overflows the half-open last bin
    assert (h.underflow, h.overflow) == (1, 2)
    assert h.total == 6


def test_histogram_rejects_bad_edges():
    with pytest.raises(NonMonotoneEdges):
        mc.histogram([0.0], [0.0, 0.0, 1.0])
    with pytest.raises(SchemaMismatch):
        mc.histogram([0.0], [0.0, 1.0]).merge(mc.histogram([0.0], [0.0, 2.0]))


@given(floats, floats)
def test_histogram_merge_is_additive(a, b):
    edges = np.linspace(-500, 500, 11)
    merged = mc.histogram(a, edges).merge(mc.histogram(b, edges))
    direct = mc.histogram(a + b, edges)
    assert list(merged.counts) == list(direct.counts)
    assert (merged.underflow, merged.overflow) == (direct.underflow, direct.overflow)


def test_params_validation():
    for bad in (dict(n=0, p=0.5, trials=1), dict(n=2, p=1.0, trials=1), dict(n=2, p=0.5, trials=0)):
        with pytest.raises(ValueError):
            mc.BatchParams(**bad)
    with pytest.raises(ValueError):
        mc.BatchParams(2, 0.5, 1, observables=("nope",))


def test_batch_independent_of_workers():
    base = dict(n=25, p=0.4, trials=600, base_seed=5, chunk_size=100)
    one = mc.run_batch(mc.BatchParams(**base, workers=1))
    two = mc.run_batch(mc.BatchParams(**base, workers=2))
    assert one.to_json() == two.to_json()
    assert one.count == 600


def test_n2_hole_probability():
    # the only hole at n=2 comes from a BOTH toppling: probability p / (2 - p)
    trials = 40_000
    s = mc.run_batch(mc.BatchParams(2, 0.5, trials, base_seed=11))
    q = 1 / 3
    assert abs(s.stats["hole_present"].mean - q) <= 4 * np.sqrt(q * (1 - q) / trials)


def test_trial_failure_carries_seed():
    params = mc.BatchParams(30, 0.5, 10, base_seed=3)
    seeds = params.seeds()
    with pytest.raises(TrialFailure) as err:
        mc.run_chunk(30, 0.5, LEFTMOST, False, seeds, first_index=40, cap=5)
    assert err.value.trial_index == 40 and err.value.seed == int(seeds[0])
    assert err.value.code == "NO_TERMINATION"


def test_traced_and_fast_rows_agree():
    params = mc.BatchParams(12, 0.3, 40, base_seed=2)
    seeds = params.seeds()
    fast = mc.run_chunk(12, 0.3, LEFTMOST, False, seeds)
    slow = mc.run_chunk(12, 0.3, LEFTMOST, True, seeds)
    assert np.array_equal(fast[:, :7], slow[:, :7])


def test_merge_schema_mismatch():
    a = mc.empty_summary(mc.BatchParams(3, 0.5, 1))
    b = mc.empty_summary(mc.BatchParams(3, 0.5, 1, observables=("K",)))
    with pytest.raises(SchemaMismatch):
        mc.merge(a, b)


def test_summary_round_trip():
    s = mc.run_batch(mc.BatchParams(10, 0.5, 50, base_seed=1))
    t = mc.BatchSummary.from_dict(json.loads(s.to_json()))
    assert t.to_json() == s.to_json()


def test_records_csv(tmp_path):
    params = mc.BatchParams(2, 0.5, 200, base_seed=9, keep_records=True)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    mc.write_records_csv(mc.run_batch(params), a)
    mc.write_records_csv(mc.run_batch(params), b)
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(a.open()))
    assert list(rows[0]) == list(mc.CSV_COLUMNS)
    for r in rows:
        width = int(r["R"]) - int(r["L"])
        assert (r["hole"] == "") == (width == 1)


def test_samples_csv_round_trip(tmp_path):
    s = mc.run_batch(mc.BatchParams(8, 0.5, 30, base_seed=4, retain_samples=True))
    path = tmp_path / "s.csv"
    mc.write_samples_csv(s, path)
    back = mc.read_samples_csv(path)
    assert np.array_equal(back["K"], s.samples["K"])
    assert np.array_equal(back["right_fluct"], s.samples["right_fluct"])
