"""
Named initial data u(x) for the fractional diffusion solver and the MC/PDE comparison.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from app.core.errors import DomainError


@dataclass(frozen=True)
class InitialCondition:
    name: str
    func: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.func(x), dtype=float), x.shape).copy()

    @property
    def wavenumber(self) -> float | None:
        """k of a cos mode, None for other shapes."""
        return float(self.params["k"]) if self.name == "cos" else None


def _constant(value: float = 1.0) -> Callable:
    return lambda x: np.full_like(x, value)


def _cos(k: float = 1.0, amplitude: float = 1.0) -> Callable:
    return lambda x: amplitude * np.cos(k * x)


def _bump(lo: float = 0.0, hi: float = 1.0, width: float = 0.1) -> Callable:
    if not hi > lo or not width > 0:
        raise DomainError("bump needs lo < hi and a positive width")
    # smoothed indicator of [lo, hi), values in [0, 1]
    return lambda x: 0.5 * (np.tanh((x - lo) / width) - np.tanh((x - hi) / width))


def _gaussian(center: float = 0.0, scale: float = 1.0) -> Callable:
    if not scale > 0:
        raise DomainError("gaussian scale must be positive")
    return lambda x: np.exp(-0.5 * ((x - center) / scale) ** 2)


_BUILDERS: dict[str, Callable[..., Callable]] = {
    "constant": _constant,
    "cos": _cos,
    "bump": _bump,
    "gaussian": _gaussian,
}
_DEFAULTS = {
    "constant": {"value": 1.0},
    "cos": {"k": 1.0, "amplitude": 1.0},
    "bump": {"lo": 0.0, "hi": 1.0, "width": 0.1},
    "gaussian": {"center": 0.0, "scale": 1.0},
}


def initial_condition(name: str, **params) -> InitialCondition:
    if name not in _BUILDERS:
        raise DomainError(f"unknown initial condition '{name}'; expected one of {sorted(_BUILDERS)}")
    unknown = set(params) - set(_DEFAULTS[name])
    if unknown:
        raise DomainError(f"initial condition '{name}' does not take {sorted(unknown)}")
    merged = {**_DEFAULTS[name], **{k: float(v) for k, v in params.items()}}
    return InitialCondition(name=name, func=_BUILDERS[name](**merged), params=merged)
