from __future__ import annotations

import math

import numpy as np
import pytest

from app.core.errors import DomainError
from app.core.intervals import CombinedSet, IntervalUnion, PointSet, PowerLawIntervals, union_of


def test_from_pairs_sorts_and_merges():
    u = IntervalUnion.from_pairs([(3, 4), (0, 1), (0.5, 2), (5, 5)])
    assert u.intervals == ((0.0, 2.0), (3.0, 4.0))
    assert u.length == 3.0
    assert u.bounded


def test_half_open_membership():
    u = IntervalUnion.from_pairs([(0, 1)])
    assert u.contains([0.0, 0.5, 1.0, -1e-12]).tolist() == [True, True, False, False]


def test_real_line_and_empty():
    line = IntervalUnion.real_line()
    assert line.is_real_line and not line.bounded
    assert line.contains([-1e300, 0.0, 1e300]).all()
    assert not IntervalUnion.empty().contains([0.0]).any()
    assert str(IntervalUnion.empty()) == "{}"


def test_measure_within_window():
    u = IntervalUnion.from_pairs([(-2, -1), (0, 3)])
    assert u.measure_within(-1.5, 1.0) == pytest.approx(1.5)
    assert IntervalUnion.real_line().measure_within(-4, 6) == 10.0


def test_translate_and_reflect():
    u = IntervalUnion.from_pairs([(0, 1), (2, 5)])
    assert u.translated(1.0).intervals == ((1.0, 2.0), (3.0, 6.0))
    assert u.reflected().intervals == ((-5.0, -2.0), (-1.0, 0.0))


def test_subset_and_closeness():
    inner = IntervalUnion.from_pairs([(0, 1)])
    outer = IntervalUnion.from_pairs([(-1, 2)])
    assert inner.issubset(outer) and not outer.issubset(inner)
    assert inner.isclose(IntervalUnion.from_pairs([(1e-12, 1 - 1e-12)]))
    assert not inner.isclose(outer)


def test_power_law_intervals_layout():
    trap = PowerLawIntervals(width=1.0, c_right=0.5, a_right=1.0, c_left=0.0, a_left=1.0)
    # right side: [k^2, k^2 + 1)
    assert trap.contains([1.5, 4.2, 9.9, 3.0, 6.0]).tolist() == [True, True, True, False, False]
    assert trap.contains([-0.5, -1.5]).tolist() == [True, False]
    assert trap.measure_within(0.0, 10.0) == pytest.approx(3.0)
    assert trap.measure_within(0.0, 9.5) == pytest.approx(2.5)
    assert trap.measure_within(-10.0, 0.0) == pytest.approx(1.0)
    assert isinstance(trap, PointSet) and not trap.bounded


def test_power_law_measure_grows_like_power():
    trap = PowerLawIntervals(width=1.0, c_right=0.5, a_right=1.0, c_left=0.0, a_left=1.0)
    for x in (1e4, 1e6):
        assert trap.measure_within(0.0, x) == pytest.approx(math.sqrt(x), rel=0.02)


def test_power_law_overlap_rejected():
    with pytest.raises(DomainError):
        PowerLawIntervals(width=1.0, c_right=0.5, a_right=3.0, c_left=0.0, a_left=1.0)
    with pytest.raises(DomainError):
        PowerLawIntervals(width=1.0, c_right=1.0, a_right=1.0, c_left=0.0, a_left=1.0)


def test_power_law_reflection_swaps_sides():
    trap = PowerLawIntervals(width=1.0, c_right=0.5, a_right=1.0, c_left=0.0, a_left=2.0)
    flipped = trap.reflected()
    x = np.array([-9.5, -4.5, -1.5, 0.5, 1.5, 4.5])
    assert np.array_equal(flipped.contains(x), trap.contains(-x))


def test_union_of_mixed_sets():
    bounded = IntervalUnion.from_pairs([(-3, -2)])
    assert isinstance(union_of(bounded, IntervalUnion.from_pairs([(0, 1)])), IntervalUnion)
    trap = PowerLawIntervals(width=1.0, c_right=0.5, a_right=1.0, c_left=0.0, a_left=1.0)
    combined = union_of(bounded, trap)
    assert isinstance(combined, CombinedSet) and not combined.bounded
    assert combined.contains([-2.5, 4.5, 3.0]).tolist() == [True, True, False]
    assert combined.measure_within(-5, 10) == pytest.approx(1.0 + 1.0 + 3.0)
