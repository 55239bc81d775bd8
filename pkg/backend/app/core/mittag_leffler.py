"""
One-parameter Mittag-Leffler function E_alpha(z) on the decay branch z <= 0.

Power series in extended precision (mpmath) where it is affordable, the
algebraic asymptotic expansion with optimal truncation for large |z|.
"""
import math

import mpmath as mp
import numpy as np
from scipy.special import rgamma

from app.core.errors import DomainError

SERIES_SWITCH = 10.0     # |z| up to here prefers the series
SERIES_LIMIT = 1500.0    # largest |z|**(1/alpha) the series is attempted for
ASYMPTOTIC_TOL = 1e-12
_MAX_ASYMPTOTIC_TERMS = 400
_MAX_SERIES_TERMS = 200_000


def _series(alpha: float, z: float) -> float:
    scale = abs(z) ** (1.0 / alpha)
    # The largest term is about exp(scale); carry enough digits to cancel it.
    dps = 30 + int(scale / math.log(10.0))
    with mp.workdps(dps):
        a = mp.mpf(alpha)
        zz = mp.mpf(z)
        tol = mp.mpf(10) ** -30
        total = mp.mpf(0)
        power = mp.mpf(1)
        peak = scale / alpha + 10
        for m in range(_MAX_SERIES_TERMS):
            term = power * mp.rgamma(a * m + 1)
            total += term
            if m > peak and abs(term) < tol:
                break
            power *= zz
        return float(total)


def _asymptotic(alpha: float, z: float) -> tuple[float, float]:
    """Return (value, error estimate) of -sum_{m>=1} z^-m / Gamma(1 - alpha m)."""
    m = np.arange(1, _MAX_ASYMPTOTIC_TERMS + 1, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        terms = -np.power(z, -m) * rgamma(1.0 - alpha * m)
    mags = np.abs(terms)
    finite = np.isfinite(mags)
    nonzero = np.flatnonzero(finite & (mags > 0))
    if not nonzero.size:
        return 0.0, 0.0
    # stop before the first growing nonzero term
    cut = nonzero[-1]
    for i, j in zip(nonzero, nonzero[1:]):
        if mags[j] > mags[i]:
            cut = i
            break
    value = float(np.sum(terms[: cut + 1][finite[: cut + 1]]))
    err = float(mags[cut])
    if alpha > 0.5:
        # exponentially small saddle contribution that the algebraic series misses
        err += (2.0 / alpha) * math.exp(abs(z) ** (1.0 / alpha) * math.cos(math.pi / alpha))
    return value, err


def mittag_leffler(alpha: float, z: float) -> float:
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if z > 0:
        raise DomainError("only the decay branch z <= 0 is supported")
    if z == 0:
        return 1.0
    if alpha == 1.0:
        return math.exp(z)

    affordable = abs(z) ** (1.0 / alpha) <= SERIES_LIMIT
    if abs(z) <= SERIES_SWITCH and affordable:
        return _series(alpha, z)
    value, err = _asymptotic(alpha, z)
    if err > ASYMPTOTIC_TOL and affordable:
        return _series(alpha, z)
    return value
