"""
Subsets of the real line used as occupation targets and level sets.

IntervalUnion is a finite union of half-open intervals [lo, hi) (endpoints
may be infinite). PowerLawIntervals is an unbounded union of width-w
intervals spaced so that the measure inside [0, x] grows like a * x**c.
Boundaries carry no mass, so the half-open convention only fixes which side
owns a breakpoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Protocol, runtime_checkable

import numpy as np

from app.core.errors import DomainError


@runtime_checkable
class PointSet(Protocol):
    bounded: bool

    def contains(self, x) -> np.ndarray: ...

    def measure_within(self, lo: float, hi: float) -> float: ...


@dataclass(frozen=True)
class IntervalUnion:
    intervals: tuple[tuple[float, float], ...] = ()

    @classmethod
    def from_pairs(cls, pairs) -> IntervalUnion:
        clean = sorted((float(lo), float(hi)) for lo, hi in pairs if float(hi) > float(lo))
        merged: list[tuple[float, float]] = []
        for lo, hi in clean:
            if merged and lo <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        return cls(tuple(merged))

    @classmethod
    def real_line(cls) -> IntervalUnion:
        return cls(((-math.inf, math.inf),))

    @classmethod
    def empty(cls) -> IntervalUnion:
        return cls(())

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(lo) and math.isfinite(hi) for lo, hi in self.intervals)

    @property
    def is_real_line(self) -> bool:
        return self.intervals == ((-math.inf, math.inf),)

    @property
    def length(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.intervals:
            return np.zeros(x.shape, dtype=bool)
        starts = np.array([lo for lo, _ in self.intervals])
        ends = np.array([hi for _, hi in self.intervals])
        idx = np.searchsorted(starts, x, side="right") - 1
        safe = np.clip(idx, 0, None)
        return (idx >= 0) & (x < ends[safe])

    def measure_within(self, lo: float, hi: float) -> float:
        total = 0.0
        for a, b in self.intervals:
            total += max(0.0, min(b, hi) - max(a, lo))
        return total

    def union(self, other: IntervalUnion) -> IntervalUnion:
        return IntervalUnion.from_pairs(self.intervals + other.intervals)

    def issubset(self, other: IntervalUnion, tol: float = 0.0) -> bool:
        for lo, hi in self.intervals:
            if not any(a - tol <= lo and hi <= b + tol for a, b in other.intervals):
                return False
        return True

    def isclose(self, other: IntervalUnion, tol: float = 1e-9) -> bool:
        if len(self.intervals) != len(other.intervals):
            return False
        for (a, b), (c, d) in zip(self.intervals, other.intervals):
            for u, v in ((a, c), (b, d)):
                if math.isinf(u) or math.isinf(v):
                    if u != v:
                        return False
                elif abs(u - v) > tol:
                    return False
        return True

    def translated(self, shift: float) -> IntervalUnion:
        return IntervalUnion(tuple((lo + shift, hi + shift) for lo, hi in self.intervals))

    def reflected(self) -> IntervalUnion:
        return IntervalUnion.from_pairs((-hi, -lo) for lo, hi in self.intervals)

    def __str__(self) -> str:
        if not self.intervals:
            return "{}"
        return " U ".join(f"[{lo:g}, {hi:g})" for lo, hi in self.intervals)


def _side_positions(width: float, a: float, c: float, upto: float) -> np.ndarray:
    """Left endpoints p_k = (k w / a)^(1/c), k >= 1, with p_k <= upto."""
    if upto <= 0:
        return np.empty(0)
    k_max = int(math.floor(a * upto**c / width)) + 1
    k = np.arange(1, k_max + 1, dtype=float)
    p = (k * width / a) ** (1.0 / c)
    return p[p <= upto]


@dataclass(frozen=True)
class PowerLawIntervals:
    """
    Unbounded minimum set with power-law growth on each side of an origin.

    On the right: intervals [p_k, p_k + width) with p_k = (k width / a_right)^(1/c_right),
    so the measure within [0, x] is about a_right * x**c_right. c = 0 stands for
    a single interval of length a adjacent to the origin. ``fill_right`` /
    ``fill_left`` add the whole half-line (used by level sets above the outer level).
    The origin sits at ``shift``.
    """

    width: float
    c_right: float
    a_right: float
    c_left: float = 0.0
    a_left: float = 1.0
    fill_right: bool = False
    fill_left: bool = False
    shift: float = 0.0

    def __post_init__(self):
        if self.width <= 0:
            raise DomainError("interval width must be positive")
        if not math.isfinite(self.shift):
            raise DomainError("shift must be finite")
        for name in ("right", "left"):
            c = getattr(self, f"c_{name}")
            a = getattr(self, f"a_{name}")
            if not 0.0 <= c < 1.0 or a <= 0:
                raise DomainError(f"growth on the {name} needs 0 <= c < 1 and a > 0")
            if c > 0:
                p1 = (self.width / a) ** (1.0 / c)
                p2 = (2.0 * self.width / a) ** (1.0 / c)
                if p2 - p1 <= self.width:
                    raise DomainError(f"intervals on the {name} overlap; lower a or width")

    bounded = False

    def _side_contains(self, y: np.ndarray, c: float, a: float) -> np.ndarray:
        if c == 0.0:
            return (y >= 0.0) & (y < a)
        k = np.floor(a * np.power(np.maximum(y, 0.0), c) / self.width)
        p = np.power(np.maximum(k, 1.0) * self.width / a, 1.0 / c)
        return (k >= 1) & (y >= p) & (y < p + self.width)

    def contains(self, x) -> np.ndarray:
        y = np.asarray(x, dtype=float) - self.shift
        right = y >= 0.0
        out = np.where(
            right,
            self.fill_right | self._side_contains(y, self.c_right, self.a_right),
            self.fill_left | self._side_contains(-y, self.c_left, self.a_left),
        )
        return np.asarray(out, dtype=bool)

    def _side_measure(self, upto: float, c: float, a: float, fill: bool) -> float:
        if upto <= 0:
            return 0.0
        if fill:
            return upto
        if c == 0.0:
            return min(upto, a)
        p = _side_positions(self.width, a, c, upto)
        return float(np.sum(np.minimum(p + self.width, upto) - p))

    def measure_within(self, lo: float, hi: float) -> float:
        lo, hi = lo - self.shift, hi - self.shift
        right = self._side_measure(hi, self.c_right, self.a_right, self.fill_right) - self._side_measure(
            max(lo, 0.0), self.c_right, self.a_right, self.fill_right
        )
        left = self._side_measure(-lo, self.c_left, self.a_left, self.fill_left) - self._side_measure(
            max(-hi, 0.0), self.c_left, self.a_left, self.fill_left
        )
        return max(right, 0.0) + max(left, 0.0)

    def translated(self, shift: float) -> PowerLawIntervals:
        return replace(self, shift=self.shift + shift)

    def reflected(self) -> PowerLawIntervals:
        return PowerLawIntervals(
            width=self.width,
            c_right=self.c_left,
            a_right=self.a_left,
            c_left=self.c_right,
            a_left=self.a_right,
            fill_right=self.fill_left,
            fill_left=self.fill_right,
            shift=-self.shift,
        )


@dataclass(frozen=True)
class CombinedSet:
    """Union of arbitrary point sets."""

    parts: tuple

    @property
    def bounded(self) -> bool:
        return all(p.bounded for p in self.parts)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for part in self.parts:
            out |= part.contains(x)
        return out

    def measure_within(self, lo: float, hi: float) -> float:
        # Upper bound when parts overlap; exact for disjoint parts.
        return min(hi - lo, sum(p.measure_within(lo, hi) for p in self.parts))


def union_of(*sets) -> PointSet:
    if all(isinstance(s, IntervalUnion) for s in sets):
        out = IntervalUnion.empty()
        for s in sets:
            out = out.union(s)
        return out
    return CombinedSet(tuple(sets))
