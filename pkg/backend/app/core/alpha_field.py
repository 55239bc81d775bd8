"""
Order fields alpha(x), their minimum structure and the predicted regime.

Four variants share the AlphaField interface:
  * PiecewiseConstantField - levels between ascending breakpoints,
    right-continuous, with constant tails;
  * SmoothField            - a vectorised callable with declared minimum,
    argmin set and tails (declarations are checked by sampling);
  * TabulatedField         - grid values with linear or step interpolation,
    declarations checked the same way;
  * PowerLawField          - minimum attained on an unbounded PowerLawIntervals
    set, two outer levels.
"""
from __future__ import annotations

import hashlib
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma

from app.core.errors import DomainError
from app.core.intervals import IntervalUnion, PointSet, PowerLawIntervals

LEVEL_SET_TOL = 1e-9
TAIL_TOL = 1e-12
_SCAN_POINTS = 20001


class RegimeKind(str, Enum):
    LOCALIZE_OCCUPATION = "LocalizeOccupation"
    LOCALIZE_PROBABILITY = "LocalizeProbability"
    DELOCALIZE = "Delocalize"
    CRITICAL = "Critical"


@dataclass(frozen=True)
class Growth:
    c1: float
    c2: float
    a1: float
    a2: float

    def __post_init__(self):
        if not (1.0 > self.c1 >= self.c2 >= 0.0):
            raise DomainError(f"growth exponents need 1 > c1 >= c2 >= 0, got c1={self.c1}, c2={self.c2}")
        if self.a1 <= 0 or self.a2 <= 0:
            raise DomainError("growth constants a1, a2 must be positive")


@dataclass(frozen=True)
class MinStructure:
    alpha_star: float
    argmin_set: PointSet
    alpha_I: float  # limit as x -> +inf
    alpha_J: float  # limit as x -> -inf
    bounded: bool
    growth: Growth | None = None
    jump_at_minimum: bool = False
    neighbourhood: PointSet | None = None  # A_beta for a small beta
    escape_set: PointSet | None = None

    def __post_init__(self):
        if self.bounded:
            # a point minimum is allowed when a neighbourhood carries the mass
            region = self.argmin_set if self.neighbourhood is None else self.neighbourhood
            length = getattr(region, "length", None)
            if length is not None and not length > 0:
                raise DomainError("argmin set or its neighbourhood must have positive length")
        elif self.growth is None:
            raise DomainError("unbounded argmin set needs a growth record")

    @property
    def alpha_outer(self) -> float:
        return min(self.alpha_I, self.alpha_J)


@dataclass(frozen=True)
class RegimePrediction:
    kind: RegimeKind
    target_set: PointSet
    condition_lhs: float
    condition_rhs: float
    escape_set: PointSet | None = None


class AlphaField(ABC):
    alpha_floor: float
    alpha_ceiling: float

    @abstractmethod
    def evaluate(self, x): ...

    @abstractmethod
    def level_set(self, beta: float) -> PointSet: ...

    @abstractmethod
    def min_structure(self) -> MinStructure: ...

    @abstractmethod
    def describe(self) -> dict: ...

    @property
    @abstractmethod
    def alpha_star(self) -> float: ...

    @property
    @abstractmethod
    def alpha_sup(self) -> float: ...

    @property
    def is_constant(self) -> bool:
        return self.alpha_star == self.alpha_sup

    def fingerprint(self) -> str:
        payload = json.dumps(self.describe(), sort_keys=True, default=float)
        return hashlib.sha256(payload.encode()).hexdigest()

    def _check_range(self) -> None:
        lo, hi = self.alpha_star, self.alpha_sup
        if not (0.0 < lo and hi < 1.0):
            raise DomainError(f"alpha must lie in (0, 1); got inf={lo}, sup={hi}")
        if lo < self.alpha_floor or hi > self.alpha_ceiling:
            raise DomainError(
                f"alpha range [{lo}, {hi}] outside the allowed [{self.alpha_floor}, {self.alpha_ceiling}]"
            )

    def _check_beta(self, beta: float) -> float:
        if not beta > 0:
            raise DomainError(f"beta must be positive, got {beta}")
        threshold = self.alpha_star + beta
        if threshold >= 1.0:
            raise DomainError(f"alpha* + beta = {threshold} must stay below 1")
        return threshold

    def _neighbourhood_beta(self, outer: float) -> float:
        gap = outer - self.alpha_star
        if not gap > 0:
            raise DomainError("minimum is attained at infinity; no bounded neighbourhood exists")
        return min(0.05, 0.25 * gap)


# ---------------------------------------------------------------------------
# Piecewise constant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseConstantField(AlphaField):
    breakpoints: tuple[float, ...]
    values: tuple[float, ...]  # one per interval between consecutive breakpoints
    tail_left: float
    tail_right: float
    alpha_floor: float = 0.05
    alpha_ceiling: float = 0.95

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(bp) < 1:
            raise DomainError("piecewise-constant field needs at least one breakpoint")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise DomainError("breakpoints must be strictly ascending")
        if len(self.values) != len(bp) - 1:
            raise DomainError(f"expected {len(bp) - 1} interior values, got {len(self.values)}")
        self._check_range()

    @property
    def levels(self) -> np.ndarray:
        return np.array((self.tail_left, *self.values, self.tail_right), dtype=float)

    @property
    def alpha_star(self) -> float:
        return float(self.levels.min())

    @property
    def alpha_sup(self) -> float:
        return float(self.levels.max())

    @property
    def cutoff(self) -> float:
        return float(max(abs(b) for b in self.breakpoints))

    def evaluate(self, x):
        idx = np.searchsorted(np.asarray(self.breakpoints), np.asarray(x, dtype=float), side="right")
        out = self.levels[idx]
        return float(out) if np.ndim(out) == 0 else out

    def _pieces(self):
        edges = (-math.inf, *self.breakpoints, math.inf)
        return [(edges[i], edges[i + 1], lvl) for i, lvl in enumerate(self.levels)]

    def _where(self, predicate) -> IntervalUnion:
        return IntervalUnion.from_pairs((lo, hi) for lo, hi, lvl in self._pieces() if predicate(lvl))

    def level_set(self, beta: float) -> IntervalUnion:
        threshold = self._check_beta(beta)
        return self._where(lambda lvl: lvl < threshold)

    def min_structure(self) -> MinStructure:
        star = self.alpha_star
        argmin = self._where(lambda lvl: lvl == star)
        if not argmin.bounded:
            raise DomainError("minimum level extends to infinity; the field has no bounded trap region")
        escape = None
        if self.tail_left == self.tail_right:
            escape = self._where(lambda lvl: lvl == self.tail_right)
        return MinStructure(
            alpha_star=star,
            argmin_set=argmin,
            alpha_I=self.tail_right,
            alpha_J=self.tail_left,
            bounded=True,
            jump_at_minimum=True,
            neighbourhood=argmin,
            escape_set=escape,
        )

    def translated(self, shift: float) -> PiecewiseConstantField:
        return replace(self, breakpoints=tuple(b + shift for b in self.breakpoints))

    def reflected(self) -> PiecewiseConstantField:
        return replace(
            self,
            breakpoints=tuple(-b for b in reversed(self.breakpoints)),
            values=tuple(reversed(self.values)),
            tail_left=self.tail_right,
            tail_right=self.tail_left,
        )

    def describe(self) -> dict:
        return {
            "kind": "piecewise_constant",
            "breakpoints": list(self.breakpoints),
            "values": list(self.values),
            "tail_left": self.tail_left,
            "tail_right": self.tail_right,
        }


def two_level_field(alpha_in: float, alpha_out: float, lo: float = 0.0, hi: float = 1.0, **kwargs) -> PiecewiseConstantField:
    return PiecewiseConstantField(
        breakpoints=(lo, hi), values=(alpha_in,), tail_left=alpha_out, tail_right=alpha_out, **kwargs
    )


def constant_field(alpha: float, **kwargs) -> PiecewiseConstantField:
    return PiecewiseConstantField(breakpoints=(0.0,), values=(), tail_left=alpha, tail_right=alpha, **kwargs)


# ---------------------------------------------------------------------------
# Declared fields (smooth / tabulated)
# ---------------------------------------------------------------------------


class _DeclaredField(AlphaField):
    """Shared verification and bracketing level sets for declared fields."""

    declared_alpha_star: float
    argmin: IntervalUnion
    tail_left: float
    tail_right: float
    cutoff: float
    jump_at_minimum: bool

    @property
    def alpha_star(self) -> float:
        return self.declared_alpha_star

    def _scan_grid(self) -> np.ndarray:
        return np.linspace(-self.cutoff, self.cutoff, _SCAN_POINTS)

    @property
    def alpha_sup(self) -> float:
        sampled = np.asarray(self.evaluate(self._scan_grid()))
        return float(max(sampled.max(), self.tail_left, self.tail_right))

    def _verify_declarations(self) -> None:
        xs = self._scan_grid()
        vals = np.asarray(self.evaluate(xs), dtype=float)
        if vals.min() < self.declared_alpha_star - LEVEL_SET_TOL:
            raise DomainError(f"declared alpha* = {self.declared_alpha_star} exceeds sampled minimum {vals.min()}")
        inside = self.argmin.contains(xs)
        if np.any(np.abs(vals[inside] - self.declared_alpha_star) > LEVEL_SET_TOL):
            raise DomainError("field differs from alpha* on the declared argmin set")
        span = max(self.cutoff, 1.0)
        beyond = self.cutoff + np.geomspace(1e-6, 1e3, 50) * span
        if np.any(np.abs(np.asarray(self.evaluate(beyond)) - self.tail_right) > TAIL_TOL):
            raise DomainError(f"declared right tail {self.tail_right} does not match the field beyond {self.cutoff}")
        if np.any(np.abs(np.asarray(self.evaluate(-beyond)) - self.tail_left) > TAIL_TOL):
            raise DomainError(f"declared left tail {self.tail_left} does not match the field beyond -{self.cutoff}")

    def level_set(self, beta: float) -> IntervalUnion:
        threshold = self._check_beta(beta)
        xs = self._scan_grid()
        below = np.asarray(self.evaluate(xs)) < threshold
        if not below.any():
            return IntervalUnion.empty()

        def g(x: float) -> float:
            return float(self.evaluate(x)) - threshold

        edges = np.flatnonzero(np.diff(below.astype(np.int8)))
        # below[i] != below[i+1] brackets an endpoint in (xs[i], xs[i+1])
        points = [brentq(g, xs[i], xs[i + 1], xtol=LEVEL_SET_TOL / 10) for i in edges]
        bounds: list[float] = []
        if below[0]:
            bounds.append(-math.inf if self.tail_left < threshold else float(xs[0]))
        bounds += points
        if below[-1]:
            bounds.append(math.inf if self.tail_right < threshold else float(xs[-1]))
        return IntervalUnion.from_pairs(zip(bounds[0::2], bounds[1::2]))

    def min_structure(self) -> MinStructure:
        outer = min(self.tail_left, self.tail_right)
        neighbourhood = self.argmin if self.jump_at_minimum else self.level_set(self._neighbourhood_beta(outer))
        return MinStructure(
            alpha_star=self.declared_alpha_star,
            argmin_set=self.argmin,
            alpha_I=self.tail_right,
            alpha_J=self.tail_left,
            bounded=self.argmin.bounded,
            jump_at_minimum=self.jump_at_minimum,
            neighbourhood=neighbourhood,
        )


@dataclass(frozen=True)
class SmoothField(_DeclaredField):
    func: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    declared_alpha_star: float
    argmin: IntervalUnion
    tail_left: float
    tail_right: float
    cutoff: float
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)
    jump_at_minimum: bool = False
    alpha_floor: float = 0.05
    alpha_ceiling: float = 0.95

    def __post_init__(self):
        self._verify_declarations()
        self._check_range()

    def evaluate(self, x):
        out = np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)
        return float(out) if out.ndim == 0 else out

    def translated(self, shift: float) -> SmoothField:
        f = self.func
        return replace(
            self,
            func=lambda x: f(np.asarray(x) - shift),
            argmin=self.argmin.translated(shift),
            cutoff=self.cutoff + abs(shift),
            params={**self.params, "shift": self.params.get("shift", 0.0) + shift},
        )

    def reflected(self) -> SmoothField:
        f = self.func
        return replace(
            self,
            func=lambda x: f(-np.asarray(x)),
            argmin=self.argmin.reflected(),
            tail_left=self.tail_right,
            tail_right=self.tail_left,
            params={**self.params, "reflected": not self.params.get("reflected", False)},
        )

    def describe(self) -> dict:
        return {
            "kind": "smooth",
            "name": self.name,
            "params": self.params,
            "alpha_star": self.declared_alpha_star,
            "argmin": [list(p) for p in self.argmin.intervals],
            "tail_left": self.tail_left,
            "tail_right": self.tail_right,
        }


def vee_field(base: float, slope: float, width: float, center: float = 0.0, **kwargs) -> SmoothField:
    """alpha(x) = base + slope * min(|x - center|, width); minimum at a single point."""
    top = base + slope * width
    return SmoothField(
        func=lambda x: base + slope * np.minimum(np.abs(x - center), width),
        declared_alpha_star=base,
        argmin=IntervalUnion.empty(),
        tail_left=top,
        tail_right=top,
        cutoff=abs(center) + width,
        name="vee",
        params={"base": base, "slope": slope, "width": width, "center": center},
        **kwargs,
    )


def plateau_field(
    alpha_min: float,
    alpha_left: float,
    alpha_right: float,
    lo: float,
    hi: float,
    ramp: float,
    **kwargs,
) -> SmoothField:
    """Flat minimum on [lo, hi] joined to the tails by a C1 smoothstep of width ``ramp``."""

    def func(x):
        x = np.asarray(x, dtype=float)
        u_left = np.clip((lo - x) / ramp, 0.0, 1.0)
        u_right = np.clip((x - hi) / ramp, 0.0, 1.0)
        step_l = u_left * u_left * (3.0 - 2.0 * u_left)
        step_r = u_right * u_right * (3.0 - 2.0 * u_right)
        return alpha_min + (alpha_left - alpha_min) * step_l + (alpha_right - alpha_min) * step_r

    return SmoothField(
        func=func,
        declared_alpha_star=alpha_min,
        argmin=IntervalUnion.from_pairs([(lo, hi)]),
        tail_left=alpha_left,
        tail_right=alpha_right,
        cutoff=max(abs(lo), abs(hi)) + ramp,
        name="plateau",
        params={"alpha_min": alpha_min, "alpha_left": alpha_left, "alpha_right": alpha_right,
                "lo": lo, "hi": hi, "ramp": ramp},
        **kwargs,
    )


@dataclass(frozen=True)
class TabulatedField(_DeclaredField):
    grid: tuple[float, ...]
    table: tuple[float, ...]
    declared_alpha_star: float
    argmin: IntervalUnion
    tail_left: float
    tail_right: float
    interpolation: str = "linear"  # linear | previous
    jump_at_minimum: bool = False
    alpha_floor: float = 0.05
    alpha_ceiling: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))
        if len(self.grid) < 2 or len(self.grid) != len(self.table):
            raise DomainError("tabulated field needs matching grid/table of length >= 2")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise DomainError("tabulation grid must be strictly ascending")
        if self.interpolation not in ("linear", "previous"):
            raise DomainError(f"unknown interpolation '{self.interpolation}'")
        self._verify_declarations()
        self._check_range()

    @property
    def cutoff(self) -> float:
        return max(abs(self.grid[0]), abs(self.grid[-1]))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        g, v = np.asarray(self.grid), np.asarray(self.table)
        if self.interpolation == "linear":
            out = np.interp(x, g, v)
        else:
            out = v[np.clip(np.searchsorted(g, x, side="right") - 1, 0, len(v) - 1)]
        return float(out) if out.ndim == 0 else out

    def translated(self, shift: float) -> TabulatedField:
        return replace(self, grid=tuple(g + shift for g in self.grid), argmin=self.argmin.translated(shift))

    def reflected(self) -> TabulatedField:
        if self.interpolation != "linear":
            raise DomainError("reflection of step-interpolated tables changes the continuity side")
        return replace(
            self,
            grid=tuple(-g for g in reversed(self.grid)),
            table=tuple(reversed(self.table)),
            argmin=self.argmin.reflected(),
            tail_left=self.tail_right,
            tail_right=self.tail_left,
        )

    def describe(self) -> dict:
        return {
            "kind": "tabulated",
            "grid": list(self.grid),
            "table": list(self.table),
            "interpolation": self.interpolation,
        }


# ---------------------------------------------------------------------------
# Unbounded minimum set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerLawField(AlphaField):
    alpha_min: float
    alpha_right: float
    alpha_left: float
    trap: PowerLawIntervals
    alpha_floor: float = 0.05
    alpha_ceiling: float = 0.95

    def __post_init__(self):
        if self.alpha_min >= min(self.alpha_left, self.alpha_right):
            raise DomainError("alpha_min must be below both outer levels")
        self._check_range()

    @property
    def alpha_star(self) -> float:
        return self.alpha_min

    @property
    def alpha_sup(self) -> float:
        return max(self.alpha_left, self.alpha_right)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        right = x >= self.trap.shift
        out = np.where(self.trap.contains(x), self.alpha_min, np.where(right, self.alpha_right, self.alpha_left))
        return float(out) if out.ndim == 0 else out

    def level_set(self, beta: float) -> PointSet:
        threshold = self._check_beta(beta)
        fill_right = self.alpha_right < threshold
        fill_left = self.alpha_left < threshold
        if fill_right and fill_left:
            return IntervalUnion.real_line()
        return replace(self.trap, fill_right=fill_right, fill_left=fill_left)

    def min_structure(self) -> MinStructure:
        t = self.trap
        if t.c_right >= t.c_left:
            growth = Growth(c1=t.c_right, c2=t.c_left, a1=t.a_right, a2=t.a_left)
        else:
            growth = Growth(c1=t.c_left, c2=t.c_right, a1=t.a_left, a2=t.a_right)
        return MinStructure(
            alpha_star=self.alpha_min,
            argmin_set=t,
            alpha_I=self.alpha_right,
            alpha_J=self.alpha_left,
            bounded=False,
            growth=growth,
            jump_at_minimum=True,
            neighbourhood=t,
        )

    def translated(self, shift: float) -> PowerLawField:
        return replace(self, trap=self.trap.translated(shift))

    def reflected(self) -> PowerLawField:
        return replace(self, alpha_right=self.alpha_left, alpha_left=self.alpha_right, trap=self.trap.reflected())

    def describe(self) -> dict:
        t = self.trap
        return {
            "kind": "power_law",
            "alpha_min": self.alpha_min,
            "alpha_right": self.alpha_right,
            "alpha_left": self.alpha_left,
            "width": t.width,
            "c_right": t.c_right,
            "a_right": t.a_right,
            "c_left": t.c_left,
            "a_left": t.a_left,
            "shift": t.shift,
        }


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def evaluate(field: AlphaField, x):
    return field.evaluate(x)


def levy_tail(field: AlphaField, s, x):
    """Tail of the jump measure, s**(-alpha(x)) / Gamma(1 - alpha(x))."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("levy_tail needs s > 0")
    alpha = np.asarray(field.evaluate(x), dtype=float)
    out = np.power(s, -alpha) / gamma(1.0 - alpha)
    return float(out) if np.ndim(out) == 0 else out


def level_set(field: AlphaField, beta: float) -> PointSet:
    return field.level_set(beta)


def classify_regime(structure: MinStructure) -> RegimePrediction:
    outer = structure.alpha_outer
    if structure.bounded:
        lhs = 2.0 * structure.alpha_star
    else:
        lhs = 2.0 * structure.alpha_star / (1.0 + structure.growth.c1)
    rhs = outer

    target = structure.neighbourhood if structure.neighbourhood is not None else structure.argmin_set
    if lhs < rhs:
        if structure.jump_at_minimum and structure.bounded:
            kind = RegimeKind.LOCALIZE_PROBABILITY
            target = structure.argmin_set
        else:
            kind = RegimeKind.LOCALIZE_OCCUPATION
    elif lhs > rhs:
        kind = RegimeKind.DELOCALIZE
    else:
        kind = RegimeKind.CRITICAL

    escape = structure.escape_set if kind is RegimeKind.DELOCALIZE else None
    return RegimePrediction(kind=kind, target_set=target, condition_lhs=lhs, condition_rhs=rhs, escape_set=escape)
