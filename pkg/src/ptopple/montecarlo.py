"""Batches of independent stabilisations with streaming summaries.

Trials are cut into fixed-size chunks.  Workers (processes) only run the
engine and hand back one integer row per trial; the parent folds the chunks
into running statistics in chunk order, so a summary never depends on how
many workers produced it.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernel, rng
from .core import LEFTMOST, InstructionSource, TopplePolicy, default_cap, stabilize_reference, status_error
from .errors import InvariantViolation, NonMonotoneEdges, SandpileError, SchemaMismatch, TrialFailure
from .observables import fluctuation_columns

INTEGER_COLUMNS = ("L", "R", "hole", "has_hole", "K", "M", "S")
OBSERVABLES = (
    "L", "R", "K", "M", "S", "hole_present",
    "left_fluct", "right_fluct", "scaled_K", "scaled_S", "scaled_M2",
)
HISTOGRAM_OBSERVABLES = ("left_fluct", "right_fluct")
CSV_COLUMNS = ("trial_index", "seed", "L", "R", "hole", "K", "M", "S", "right_fluct", "left_fluct")
SAMPLE_CAP = 1_000_000


class RunningStats:
    """Count, mean and second central moment (M2), mergeable with Chan's rule."""

    def __init__(self, count=0, mean=0.0, m2=0.0, min=math.inf, max=-math.inf):
        self.count = count
        self.mean = mean
        self.m2 = m2
        self.min = min
        self.max = max

    @classmethod
    def of(cls, values) -> "RunningStats":
        x = np.asarray(values, dtype=float)
        if x.size == 0:
            return cls()
        mean = float(x.mean())
        return cls(int(x.size), mean, float(((x - mean) ** 2).sum()), float(x.min()), float(x.max()))

    def push(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)
        self.min = min(self.min, value)
        self.max = max(self.max, value)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return RunningStats(self.count, self.mean, self.m2, self.min, self.max)
        if self.count == 0:
            return RunningStats(other.count, other.mean, other.m2, other.min, other.max)
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / count
        return RunningStats(count, mean, m2, min(self.min, other.min), max(self.max, other.max))

    @property
    def variance(self) -> float:
        """Unbiased sample variance (0 for fewer than two values)."""
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def stddev(self) -> float:
        return math.sqrt(self.variance)

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "m2": self.m2,
                "variance": self.variance, "min": self.min, "max": self.max}

    @classmethod
    def from_dict(cls, d: dict) -> "RunningStats":
        return cls(d["count"], d["mean"], d["m2"], d["min"], d["max"])

    def __repr__(self):
        return f"RunningStats(count={self.count}, mean={self.mean:.6g}, variance={self.variance:.6g})"


@dataclass
class Histogram:
    """Counts on half-open bins ``[e_i, e_{i+1})`` plus explicit under/overflow."""

    edges: tuple
    counts: list
    underflow: int = 0
    overflow: int = 0

    @classmethod
    def empty(cls, edges) -> "Histogram":
        edges = tuple(float(e) for e in edges)
        _check_edges(edges)
        return cls(edges, [0] * (len(edges) - 1))

    @property
    def total(self) -> int:
        return sum(self.counts) + self.underflow + self.overflow

    def add(self, samples) -> None:
        h = histogram(samples, self.edges)
        self.counts = [a + b for a, b in zip(self.counts, h.counts)]
        self.underflow += h.underflow
        self.overflow += h.overflow

    def merge(self, other: "Histogram") -> "Histogram":
        if self.edges != other.edges:
            raise SchemaMismatch("histograms have different bin edges")
        return Histogram(self.edges, [a + b for a, b in zip(self.counts, other.counts)],
                         self.underflow + other.underflow, self.overflow + other.overflow)

    def to_dict(self) -> dict:
        return {"edges": list(self.edges), "counts": list(self.counts),
                "underflow": self.underflow, "overflow": self.overflow}

    @classmethod
    def from_dict(cls, d: dict) -> "Histogram":
        return cls(tuple(d["edges"]), list(d["counts"]), d["underflow"], d["overflow"])


def _check_edges(edges) -> None:
    if len(edges) < 2:
        raise NonMonotoneEdges("need at least two bin edges")
    if any(not b > a for a, b in zip(edges, edges[1:])):
        raise NonMonotoneEdges("bin edges must be strictly increasing")


def histogram(samples, edges) -> Histogram:
    edges = tuple(float(e) for e in edges)
    _check_edges(edges)
    x = np.asarray(samples, dtype=float)
    pos = np.searchsorted(np.asarray(edges), x, side="right") - 1
    nbins = len(edges) - 1
    under = int(np.count_nonzero(pos < 0))
    over = int(np.count_nonzero(pos >= nbins))
    inside = pos[(pos >= 0) & (pos < nbins)]
    counts = np.bincount(inside, minlength=nbins)
    return Histogram(edges, [int(c) for c in counts], under, over)


def default_edges(p: float, bins: int = 61) -> np.ndarray:
    """``bins`` equal bins over ``[-4 sigma, 4 sigma]``, ``sigma**2 = (1 - p) / 12``."""
    sigma = math.sqrt((1.0 - float(p)) / 12.0)
    return np.linspace(-4.0 * sigma, 4.0 * sigma, bins + 1)


@dataclass
class BatchParams:
    n: int
    p: float
    trials: int
    base_seed: int = 0
    policy: TopplePolicy = LEFTMOST
    traced: bool = False
    observables: Sequence[str] = OBSERVABLES
    retain_samples: bool = False
    keep_records: bool = False
    bins: int = 61
    workers: int = 1
    chunk_size: int = 250

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n!r}")
        if not 0.0 < float(self.p) < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials!r}")
        unknown = set(self.observables) - set(OBSERVABLES)
        if unknown:
            raise ValueError(f"unknown observables {sorted(unknown)}")

    def seeds(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        stop = self.trials if stop is None else stop
        return np.array([rng.trial_seed(self.base_seed, i) for i in range(start, stop)], dtype=np.uint64)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "p": float(self.p), "trials": self.trials, "base_seed": self.base_seed,
            "policy": str(self.policy), "traced": self.traced, "observables": list(self.observables),
            "retain_samples": self.retain_samples, "bins": self.bins, "chunk_size": self.chunk_size,
        }


@dataclass
class BatchSummary:
    params: dict
    stats: dict
    histograms: dict
    total_topplings: int = 0
    wall_time: float = 0.0
    samples: Optional[dict] = None
    records: Optional[np.ndarray] = None
    seeds: Optional[np.ndarray] = None

    @property
    def count(self) -> int:
        return next(iter(self.stats.values())).count if self.stats else 0

    def to_dict(self, header: Optional[dict] = None) -> dict:
        """JSON-ready form.  Wall time is left out so reruns are byte-identical."""
        return {
            "header": header or {"config": self.params},
            "count": self.count,
            "total_topplings": self.total_topplings,
            "stats": {k: v.to_dict() for k, v in self.stats.items()},
            "histograms": {k: v.to_dict() for k, v in self.histograms.items()},
        }

    def to_json(self, header: Optional[dict] = None) -> str:
        return json.dumps(self.to_dict(header), indent=2, sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "BatchSummary":
        return cls(
            params=d["header"].get("config", {}),
            stats={k: RunningStats.from_dict(v) for k, v in d["stats"].items()},
            histograms={k: Histogram.from_dict(v) for k, v in d["histograms"].items()},
            total_topplings=d.get("total_topplings", 0),
        )


def empty_summary(params: BatchParams) -> BatchSummary:
    edges = default_edges(params.p, params.bins)
    return BatchSummary(
        params=params.to_dict(),
        stats={k: RunningStats() for k in params.observables},
        histograms={k: Histogram.empty(edges) for k in HISTOGRAM_OBSERVABLES if k in params.observables},
    )


def merge(a: BatchSummary, b: BatchSummary) -> BatchSummary:
    """Combine two summaries over the same observables and bin edges."""
    if set(a.stats) != set(b.stats) or set(a.histograms) != set(b.histograms):
        raise SchemaMismatch("summaries track different observables")
    hist = {k: a.histograms[k].merge(b.histograms[k]) for k in a.histograms}
    stats = {k: a.stats[k].merge(b.stats[k]) for k in a.stats}
    samples = None
    if a.samples is not None or b.samples is not None:
        samples = {}
        for k in a.stats:
            parts = [s[k] for s in (a.samples, b.samples) if s is not None and k in s]
            samples[k] = np.concatenate(parts)[:SAMPLE_CAP] if parts else np.empty(0)
    records = seeds = None
    if a.records is not None and b.records is not None:
        records = np.concatenate([a.records, b.records])
        seeds = np.concatenate([a.seeds, b.seeds])
    elif a.records is not None or b.records is not None:
        records = a.records if a.records is not None else b.records
        seeds = a.seeds if a.seeds is not None else b.seeds
    return BatchSummary(a.params, stats, hist, a.total_topplings + b.total_topplings,
                        a.wall_time + b.wall_time, samples, records, seeds)


def observable_columns(n: int, rows: np.ndarray) -> dict:
    """Per-trial observables from kernel rows ``[L, R, hole, has_hole, K, M, S, ...]``."""
    left, right, _, has_hole, k, m, s = (rows[:, i] for i in range(7))
    cols = {"L": left, "R": right, "K": k, "M": m, "S": s, "hole_present": has_hole}
    cols.update(fluctuation_columns(n, left, right, k, m, s))
    return cols


def _traced_rows(n, p, seeds, first_index, cap, policy) -> np.ndarray:
    rows = np.zeros((len(seeds), 8), dtype=np.int64)
    for t, seed in enumerate(seeds):
        try:
            out = stabilize_reference(n, InstructionSource(int(seed), p), policy, trace=True, cap=cap)
            ms = out.trace.center_of_mass
            if any(abs(b - a) > 1 for a, b in zip(ms, ms[1:])):
                raise InvariantViolation("centre-of-mass increment larger than 1")
        except SandpileError as exc:
            raise TrialFailure(exc, first_index + t, int(seed)) from exc
        rows[t] = [out.left, out.right, out.hole or 0, out.hole is not None,
                   out.topplings, out.center_of_mass, out.square_center_of_mass, kernel.OK]
    return rows


def run_chunk(n: int, p: float, policy: TopplePolicy, traced: bool, seeds: np.ndarray,
              first_index: int = 0, cap: Optional[int] = None) -> np.ndarray:
    """Run the trials of one chunk and return their kernel rows.

    Raises :class:`TrialFailure` for the first failing trial of the chunk.
    """
    cap = default_cap(n, p) if cap is None else cap
    if traced:
        return _traced_rows(n, p, seeds, first_index, cap, policy)
    rows = np.zeros((len(seeds), 8), dtype=np.int64)
    pseeds = np.array([policy.run_seed(int(s)) for s in seeds], dtype=np.uint64)
    failed = kernel.run_trials(n, seeds, np.uint64(rng.bernoulli_threshold(p)), np.int64(cap),
                               policy.code, pseeds, rows)
    if failed >= 0:
        cause = status_error(int(rows[failed, 7]), f" (n={n})")
        raise TrialFailure(cause, first_index + int(failed), int(seeds[failed]))
    return rows


def _chunk_summary(params: BatchParams, rows: np.ndarray, seeds: np.ndarray) -> BatchSummary:
    cols = observable_columns(params.n, rows)
    part = empty_summary(params)
    part.stats = {k: RunningStats.of(cols[k]) for k in params.observables}
    for k, h in part.histograms.items():
        h.add(cols[k])
    part.total_topplings = int(rows[:, 4].sum())
    if params.retain_samples:
        part.samples = {k: np.asarray(cols[k], dtype=float) for k in params.observables}
    if params.keep_records:
        part.records = rows[:, :7].copy()
        part.seeds = seeds.copy()
    return part


def run_batch(params: BatchParams) -> BatchSummary:
    """Run ``params.trials`` seeded stabilisations and summarise them.

    Raises :class:`TrialFailure` carrying the trial index and derived seed of
    the first trial that hit an engine error or invariant violation.
    """
    start_time = time.perf_counter()
    bounds = [(i, min(i + params.chunk_size, params.trials))
              for i in range(0, params.trials, params.chunk_size)]
    seed_chunks = [params.seeds(a, b) for a, b in bounds]
    jobs = [(params.n, float(params.p), params.policy, params.traced, s, a)
            for (a, _), s in zip(bounds, seed_chunks)]
    workers = max(1, min(params.workers or 1, len(jobs)))
    if workers == 1:
        summary = _fold(params, seed_chunks, (run_chunk(*job) for job in jobs))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summary = _fold(params, seed_chunks, pool.map(run_chunk, *zip(*jobs)))
    summary.wall_time = time.perf_counter() - start_time
    return summary


def _fold(params, seed_chunks, results) -> BatchSummary:
    summary = empty_summary(params)
    samples, records = [], []
    for seeds, rows in zip(seed_chunks, results):
        part = _chunk_summary(params, rows, seeds)
        samples.append(part.samples)
        records.append((part.records, part.seeds))
        part.samples = part.records = part.seeds = None
        summary = merge(summary, part)
    # raw columns are concatenated once at the end rather than per merge
    if params.retain_samples:
        summary.samples = {k: np.concatenate([s[k] for s in samples])[:SAMPLE_CAP]
                           for k in params.observables}
    if params.keep_records:
        summary.records = np.concatenate([r for r, _ in records])
        summary.seeds = np.concatenate([s for _, s in records])
    return summary


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def write_records_csv(summary: BatchSummary, path) -> None:
    """Per-trial CSV; ``hole`` is empty when the final configuration has no hole."""
    if summary.records is None:
        raise ValueError("batch was run without keep_records")
    n = summary.params["n"]
    cols = observable_columns(n, np.column_stack([summary.records, np.zeros(len(summary.records), np.int64)]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for i, row in enumerate(summary.records):
            left, right, hole, has_hole, k, m, s = (int(v) for v in row)
            w.writerow([i, int(summary.seeds[i]), left, right, hole if has_hole else "", k, m, s,
                        repr(float(cols["right_fluct"][i])), repr(float(cols["left_fluct"][i]))])


def write_samples_csv(summary: BatchSummary, path) -> None:
    if summary.samples is None:
        raise ValueError("batch was run without retain_samples")
    names = list(summary.samples)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*(summary.samples[k] for k in names)):
            w.writerow([repr(float(v)) for v in row])


def read_samples_csv(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        cols = [[] for _ in names]
        for row in reader:
            for c, v in zip(cols, row):
                c.append(float(v) if v != "" else math.nan)
    return {k: np.asarray(c) for k, c in zip(names, cols)}
