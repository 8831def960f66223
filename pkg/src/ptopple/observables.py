"""Boundaries, hole, centre of mass and rescaled fluctuations of final configurations.

Functions taking ``counts`` accept a ``{site: count}`` mapping or a
:class:`~ptopple.core.Configuration`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import EmptyConfiguration, MultipleHoles


def _as_mapping(counts):
    if hasattr(counts, "occupied"):
        return counts.occupied()
    return counts


def boundaries(counts) -> tuple:
    """Leftmost and rightmost occupied sites."""
    occupied = [v for v, k in _as_mapping(counts).items() if k > 0]
    if not occupied:
        raise EmptyConfiguration("no occupied site")
    return min(occupied), max(occupied)


def find_hole(counts, left: int, right: int) -> Optional[int]:
    """The unique vacant site strictly between ``left`` and ``right``, if any."""
    c = _as_mapping(counts)
    vacant = [v for v in range(left + 1, right) if c.get(v, 0) == 0]
    if len(vacant) > 1:
        raise MultipleHoles(f"vacant interior sites {vacant}")
    return vacant[0] if vacant else None


def center_of_mass(counts) -> int:
    return sum(v * k for v, k in _as_mapping(counts).items())


def square_center_of_mass(counts) -> int:
    return sum(v * v * k for v, k in _as_mapping(counts).items())


@dataclass(frozen=True)
class FluctuationSample:
    n: int
    left_fluct: float
    right_fluct: float
    scaled_K: float
    scaled_S: float
    scaled_M2: float
    hole_present: bool

    def to_dict(self) -> dict:
        return asdict(self)


def left_fluctuation(left: int, n: int) -> float:
    """``(L + n/2) / sqrt(n)``, computed as ``(2L + n) / (2 sqrt(n))``."""
    return (2 * left + n) / (2.0 * math.sqrt(n))


def right_fluctuation(right: int, n: int) -> float:
    return (2 * right - n) / (2.0 * math.sqrt(n))


def fluctuation_sample(outcome, n: Optional[int] = None) -> FluctuationSample:
    n = outcome.n if n is None else n
    n3 = n**3
    return FluctuationSample(
        n=n,
        left_fluct=left_fluctuation(outcome.left, n),
        right_fluct=right_fluctuation(outcome.right, n),
        scaled_K=outcome.topplings / n3,
        scaled_S=outcome.square_center_of_mass / n3,
        scaled_M2=outcome.center_of_mass**2 / n3,
        hole_present=outcome.hole is not None,
    )


def fluctuation_columns(n: int, left, right, k, m, s) -> dict:
    """Vectorised :func:`fluctuation_sample` over integer observable arrays.

    Numerators are formed in exact int64 arithmetic; a single float division
    happens at the end, matching the scalar path bit for bit.
    """
    left = np.asarray(left, dtype=np.int64)
    right = np.asarray(right, dtype=np.int64)
    m = np.asarray(m, dtype=np.int64)
    denom = 2.0 * math.sqrt(n)
    n3 = float(n**3)
    return {
        "left_fluct": (2 * left + n) / denom,
        "right_fluct": (2 * right - n) / denom,
        "scaled_K": np.asarray(k, dtype=np.int64) / n3,
        "scaled_S": np.asarray(s, dtype=np.int64) / n3,
        "scaled_M2": (m * m) / n3,
    }
