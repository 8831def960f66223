import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ptopple.core import InstructionSource, stabilize
from ptopple.errors import EmptyConfiguration, MultipleHoles
from ptopple.observables import (
    boundaries,
    center_of_mass,
    find_hole,
    fluctuation_columns,
    fluctuation_sample,
    left_fluctuation,
    right_fluctuation,
    square_center_of_mass,
)


def test_boundaries_and_hole():
    counts = {-2: 1, -1: 1, 1: 1, 2: 1}
    assert boundaries(counts) == (-2, 2)
    assert find_hole(counts, -2, 2) == 0
    assert find_hole({0: 1, 1: 1}, 0, 1) is None


def test_two_vacancies_raise():
    with pytest.raises(MultipleHoles):
        find_hole({-2: 1, 2: 1}, -2, 2)


def test_empty_configuration_raises():
    with pytest.raises(EmptyConfiguration):
        boundaries({})


def test_moments_example():
    counts = {-1: 1, 0: 1, 2: 1}
    assert center_of_mass(counts) == 1
    assert square_center_of_mass(counts) == 5


@given(st.integers(-100, 100), st.integers(0, 150))
def test_full_interval_moments(left, length):
    right = left + length
    counts = {v: 1 for v in range(left, right + 1)}
    assert center_of_mass(counts) * 2 == (left + right) * (right - left + 1)

    def sq(m):  # sum of i^2 for i = 1..m
        return m * (m + 1) * (2 * m + 1) // 6

    expected = sq(right) + sq(-left) if left <= 0 else sq(right) - sq(left - 1)
    if right < 0:
        expected = sq(-left) - sq(-right - 1)
    assert square_center_of_mass(counts) == expected


def test_sum_of_squares_formula():
    for m in range(0, 60):
        assert sum(i * i for i in range(m + 1)) * 6 == 2 * m**3 + 3 * m**2 + m


def test_fluctuations():
    assert left_fluctuation(-50, 100) == 0.0
    assert right_fluctuation(50, 100) == 0.0
    assert right_fluctuation(55, 100) == pytest.approx(0.5)
    assert left_fluctuation(-45, 100) == pytest.approx(0.5)


@given(st.integers(2, 40), st.integers(0, 2**64 - 1))
def test_fluctuation_sample_matches_columns(n, seed):
    out = stabilize(n, InstructionSource(seed, 0.5))
    s = fluctuation_sample(out)
    cols = fluctuation_columns(n, *(np.array([x]) for x in (out.left, out.right, out.topplings,
                                                          out.center_of_mass, out.square_center_of_mass)))
    assert cols["left_fluct"][0] == pytest.approx(s.left_fluct)
    assert cols["right_fluct"][0] == pytest.approx(s.right_fluct)
    assert cols["scaled_K"][0] == pytest.approx(out.topplings / n**3)
    assert cols["scaled_M2"][0] == pytest.approx(out.center_of_mass**2 / n**3)
    # both boundaries differ from the centre by the width term
    centre = (out.left + out.right) / (2 * math.sqrt(n))
    assert s.right_fluct == pytest.approx(centre + (out.width - n) / (2 * math.sqrt(n)))
    assert s.left_fluct == pytest.approx(centre - (out.width - n) / (2 * math.sqrt(n)))
