from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from app.core.errors import DomainError, TimeOverflow
from app.core.random_streams import (
    RandomStream,
    log_positive_stable,
    sample_gaussian,
    sample_positive_stable,
    sample_stable_increment,
)


def _stable_sample(alpha: float, n: int, *, seed: int = 7, stream_id: int = 0) -> np.ndarray:
    gen = RandomStream(seed=seed, stream_id=stream_id).generator
    return np.exp(log_positive_stable(alpha, gen, size=n))


def test_same_key_replays_the_same_draws():
    a = RandomStream(seed=42, stream_id=3)
    b = RandomStream(seed=42, stream_id=3)
    assert [sample_gaussian(a) for _ in range(5)] == [sample_gaussian(b) for _ in range(5)]
    assert sample_positive_stable(0.4, a) == sample_positive_stable(0.4, b)


def test_distinct_stream_ids_are_distinct():
    x = RandomStream(seed=42, stream_id=0).generator.random(100)
    y = RandomStream(seed=42, stream_id=1).generator.random(100)
    assert not np.array_equal(x, y)


def test_position_advances_with_draws():
    stream = RandomStream(seed=1, stream_id=0)
    start = stream.position
    stream.generator.random(1000)
    assert stream.position > start


def test_start_counter_is_fixed_while_position_moves():
    stream = RandomStream(seed=1, stream_id=0, start_counter=5)
    assert stream.position == 5
    stream.generator.random(1000)
    assert stream.start_counter == 5 and stream.position > 5


def test_spawn_keeps_seed():
    child = RandomStream(seed=9, stream_id=0).spawn(5)
    assert (child.seed, child.stream_id) == (9, 5)
    assert np.array_equal(child.generator.random(4), RandomStream(seed=9, stream_id=5).generator.random(4))


def _laplace_gaps(alpha: float, n: int, rates) -> list[tuple[float, float]]:
    s = _stable_sample(alpha, n, stream_id=int(round(alpha * 100)))
    assert np.all(s > 0)
    gaps = []
    for lam in rates:
        values = np.exp(-lam * s)
        se = values.std(ddof=1) / np.sqrt(values.size)
        gaps.append((abs(values.mean() - np.exp(-lam**alpha)), 4 * se))
    return gaps


def test_stable_laplace_transform_quick():
    for gap, allowed in _laplace_gaps(0.5, 200_000, (0.5, 1.0, 2.0)):
        assert gap < allowed


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
def test_stable_laplace_transform(alpha):
    gaps = _laplace_gaps(alpha, 1_000_000, (0.25, 0.5, 1.0, 2.0, 4.0))
    assert all(gap < allowed for gap, allowed in gaps), gaps


def test_half_order_matches_inverse_square_gaussian():
    s = _stable_sample(0.5, 100_000, seed=11)
    z = RandomStream(seed=11, stream_id=99).generator.standard_normal(100_000)
    reference = 1.0 / (2.0 * z**2)
    assert stats.ks_2samp(s, reference).pvalue > 1e-3
    assert np.median(s) == pytest.approx(1.0990, abs=0.03)


def test_small_order_stays_finite_in_log_space():
    log_s = log_positive_stable(0.05, RandomStream(seed=3, stream_id=0).generator, size=10_000)
    assert np.all(np.isfinite(log_s))


def test_stable_increment_scales_with_dt():
    stream = RandomStream(seed=5, stream_id=0)
    values = np.array([sample_stable_increment(0.5, 4.0, stream).value for _ in range(20_000)])
    # E exp(-dt^(1/a) S) = exp(-dt)
    weights = np.exp(-values)
    se = weights.std(ddof=1) / np.sqrt(weights.size)
    assert abs(weights.mean() - np.exp(-4.0)) < 4 * se


def test_increment_records_order_and_step():
    inc = sample_stable_increment(0.3, 0.01, RandomStream(seed=0, stream_id=0))
    assert inc.value > 0
    assert (inc.order, inc.dt) == (0.3, 0.01)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.5, float("nan")])
def test_order_outside_open_unit_interval(alpha):
    with pytest.raises(DomainError):
        sample_positive_stable(alpha, RandomStream(seed=0, stream_id=0))


@pytest.mark.parametrize("dt", [0.0, -1.0])
def test_nonpositive_step(dt):
    with pytest.raises(DomainError):
        sample_stable_increment(0.5, dt, RandomStream(seed=0, stream_id=0))


def test_increment_overflow_is_reported():
    with pytest.raises(TimeOverflow):
        sample_stable_increment(0.01, 1e100, RandomStream(seed=0, stream_id=0))
