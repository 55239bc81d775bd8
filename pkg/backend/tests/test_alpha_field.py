from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import gamma

from app.core.alpha_field import (
    PiecewiseConstantField,
    PowerLawField,
    RegimeKind,
    TabulatedField,
    classify_regime,
    constant_field,
    evaluate,
    level_set,
    levy_tail,
    plateau_field,
    two_level_field,
    vee_field,
)
from app.core.errors import DomainError
from app.core.intervals import IntervalUnion, PowerLawIntervals


def _staircase() -> PiecewiseConstantField:
    return PiecewiseConstantField(
        breakpoints=(-1.0, 0.0, 1.5, 2.0), values=(0.5, 0.3, 0.6), tail_left=0.7, tail_right=0.9
    )


def test_two_level_lookup_is_right_continuous(localize_field):
    assert evaluate(localize_field, 0.5) == 0.3
    assert evaluate(localize_field, 2.0) == 0.7
    assert evaluate(localize_field, 1.0) == 0.7
    assert evaluate(localize_field, 0.0) == 0.3
    assert np.array_equal(evaluate(localize_field, [-1.0, 0.5]), [0.7, 0.3])


def test_levy_tail_values(localize_field):
    half = constant_field(0.5)
    assert levy_tail(half, 1.0, 3.0) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-6)
    assert levy_tail(localize_field, 4.0, 0.5) == pytest.approx(0.50829, abs=1e-5)


def test_levy_tail_identity_and_monotonicity(localize_field):
    s = np.geomspace(1e-3, 1e3, 25)
    for x in (-3.0, 0.25, 0.9, 7.0):
        a = evaluate(localize_field, x)
        tail = levy_tail(localize_field, s, x)
        assert np.allclose(tail * gamma(1 - a) * s**a, 1.0, rtol=1e-14)
        assert np.all(np.diff(tail) < 0)


@pytest.mark.parametrize("s", [0.0, -1.0])
def test_levy_tail_needs_positive_jump(localize_field, s):
    with pytest.raises(DomainError):
        levy_tail(localize_field, s, 0.5)


def test_level_sets_of_two_level_field(localize_field):
    assert level_set(localize_field, 0.2).intervals == ((0.0, 1.0),)
    assert level_set(localize_field, 0.5).is_real_line
    with pytest.raises(DomainError):
        level_set(localize_field, 0.7)


def test_vee_level_set_brackets_roots():
    field = vee_field(0.3, 0.4, 1.0)
    assert level_set(field, 0.2).isclose(IntervalUnion.from_pairs([(-0.5, 0.5)]), tol=1e-9)


def test_level_sets_are_nested():
    field = _staircase()
    betas = [0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65]
    sets = [level_set(field, b) for b in betas]
    for small, big in zip(sets, sets[1:]):
        assert small.issubset(big)


@pytest.mark.parametrize("beta", [0.1, 0.25, 0.35, 0.5])
def test_piecewise_level_set_matches_scan(beta):
    field = _staircase()
    xs = np.arange(-1.5, 2.5, 1e-4)
    scan = np.asarray(field.evaluate(xs)) < field.alpha_star + beta
    assert np.array_equal(level_set(field, beta).contains(xs), scan)


def test_smooth_level_set_matches_scan():
    field = plateau_field(0.3, 0.8, 0.6, -1.0, 1.0, 0.5)
    found = level_set(field, 0.15)
    xs = np.linspace(-2.0, 2.0, 4001)
    scan = np.asarray(field.evaluate(xs)) < 0.45
    assert np.array_equal(found.contains(xs), scan)


def test_declarations_are_verified():
    with pytest.raises(DomainError):
        TabulatedField(
            grid=(-1.0, 0.0, 1.0), table=(0.7, 0.3, 0.7), declared_alpha_star=0.4,
            argmin=IntervalUnion.empty(), tail_left=0.7, tail_right=0.7,
        )


@pytest.mark.parametrize("alpha", [0.0, 1.0, 0.02, 0.97])
def test_orders_outside_allowed_range(alpha):
    with pytest.raises(DomainError):
        constant_field(alpha)


def test_constant_field_has_no_trap_region():
    field = constant_field(0.5)
    assert field.is_constant
    with pytest.raises(DomainError):
        field.min_structure()


@pytest.mark.parametrize(
    "alpha_in, alpha_out, expected",
    [
        (0.3, 0.7, RegimeKind.LOCALIZE_PROBABILITY),
        (0.4, 0.7, RegimeKind.DELOCALIZE),
        (0.35, 0.7, RegimeKind.CRITICAL),
    ],
)
def test_bounded_regimes(alpha_in, alpha_out, expected):
    prediction = classify_regime(two_level_field(alpha_in, alpha_out).min_structure())
    assert prediction.kind is expected
    assert prediction.condition_lhs == 2 * alpha_in
    assert prediction.condition_rhs == alpha_out


def test_localize_probability_targets_argmin(localize_field):
    prediction = classify_regime(localize_field.min_structure())
    assert prediction.target_set.intervals == ((0.0, 1.0),)


def test_delocalize_reports_escape_set():
    prediction = classify_regime(two_level_field(0.4, 0.7).min_structure())
    assert prediction.escape_set.contains([-5.0, 5.0, 0.5]).tolist() == [True, True, False]


def test_point_minimum_localizes_occupation_on_neighbourhood():
    prediction = classify_regime(vee_field(0.3, 0.4, 1.0).min_structure())
    assert prediction.kind is RegimeKind.LOCALIZE_OCCUPATION
    assert prediction.target_set.bounded
    assert prediction.target_set.contains([0.0]).all()


def test_unbounded_minimum_set():
    trap = PowerLawIntervals(width=1.0, c_right=0.5, a_right=1.0, c_left=0.0, a_left=1.0)
    field = PowerLawField(alpha_min=0.4, alpha_right=0.6, alpha_left=0.6, trap=trap)
    structure = field.min_structure()
    assert not structure.bounded and structure.growth.c1 == 0.5
    prediction = classify_regime(structure)
    assert prediction.kind is RegimeKind.LOCALIZE_OCCUPATION
    assert prediction.condition_lhs == pytest.approx(0.8 / 1.5)
    assert prediction.condition_rhs == 0.6


@pytest.mark.parametrize("shift", [-7.5, 0.25, 100.0])
def test_regime_invariant_under_translation(shift):
    for field in (two_level_field(0.3, 0.7), two_level_field(0.4, 0.7), _staircase()):
        assert classify_regime(field.translated(shift).min_structure()).kind is classify_regime(field.min_structure()).kind


@pytest.mark.parametrize("shift", [-7.5, 0.25, 100.0])
def test_unbounded_regime_invariant_under_translation(shift):
    trap = PowerLawIntervals(width=1.0, c_right=0.5, a_right=1.0)
    field = PowerLawField(alpha_min=0.3, alpha_right=0.6, alpha_left=0.7, trap=trap)
    moved = field.translated(shift)
    x = np.arange(-80, 161) * 0.25 + 0.125
    assert np.array_equal(moved.evaluate(x + shift), field.evaluate(x))
    assert moved.trap.measure_within(shift, shift + 50.0) == pytest.approx(trap.measure_within(0.0, 50.0))
    assert classify_regime(moved.min_structure()).kind is classify_regime(field.min_structure()).kind
    assert moved.reflected().trap.shift == -shift
    assert moved.fingerprint() != field.fingerprint()


def test_regime_invariant_under_reflection():
    field = _staircase()
    flipped = field.reflected()
    assert (flipped.tail_left, flipped.tail_right) == (field.tail_right, field.tail_left)
    assert classify_regime(flipped.min_structure()).kind is classify_regime(field.min_structure()).kind
    trap = PowerLawIntervals(width=1.0, c_right=0.5, a_right=1.0, c_left=0.0, a_left=1.0)
    unbounded = PowerLawField(alpha_min=0.4, alpha_right=0.6, alpha_left=0.7, trap=trap)
    assert classify_regime(unbounded.reflected().min_structure()).kind is classify_regime(unbounded.min_structure()).kind


def test_fingerprint_tracks_parameters():
    assert two_level_field(0.3, 0.7).fingerprint() == two_level_field(0.3, 0.7).fingerprint()
    assert two_level_field(0.3, 0.7).fingerprint() != two_level_field(0.3, 0.71).fingerprint()
