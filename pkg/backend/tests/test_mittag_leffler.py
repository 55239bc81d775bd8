from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import erfcx, gamma

from app.core.errors import DomainError
from app.core.mittag_leffler import mittag_leffler


@pytest.mark.parametrize("x", [0.1, 1.0, 3.0, 9.5, 10.5, 20.0, 40.0, 200.0])
def test_half_order_is_scaled_complementary_error_function(x):
    assert mittag_leffler(0.5, -x) == pytest.approx(erfcx(x), rel=1e-9, abs=1e-12)


def test_known_values():
    assert mittag_leffler(1.0, -1.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert mittag_leffler(0.3, 0.0) == 1.0
    assert mittag_leffler(0.5, -1.0) == pytest.approx(math.e * math.erfc(1.0), abs=1e-8)


def test_large_argument_tail():
    z = -15.0
    two_terms = -1 / (z * gamma(1 - 0.9)) - 1 / (z**2 * gamma(1 - 1.8))
    assert mittag_leffler(0.9, z) == pytest.approx(two_terms, abs=1e-3)
    z = -5.0
    leading = -1 / (z * gamma(1 - 0.2))
    assert mittag_leffler(0.2, z) == pytest.approx(leading, abs=0.03)


@pytest.mark.parametrize("alpha", [0.2, 0.45, 0.7, 0.95])
def test_decay_branch_is_monotone_and_positive(alpha):
    values = np.array([mittag_leffler(alpha, -x) for x in np.geomspace(0.05, 60.0, 40)])
    assert np.all(values > 0) and np.all(values < 1)
    assert np.all(np.diff(values) < 0)


def test_order_one_limit_is_continuous():
    assert mittag_leffler(0.999, -2.0) == pytest.approx(math.exp(-2.0), rel=5e-3)


@pytest.mark.parametrize("alpha, z", [(0.0, -1.0), (1.2, -1.0), (0.5, 0.5)])
def test_outside_supported_domain(alpha, z):
    with pytest.raises(DomainError):
        mittag_leffler(alpha, z)
