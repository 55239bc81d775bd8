"""
Reproducible random streams and one-sided stable variates.

Every stream is a numpy Generator over a Philox counter-based bit generator
keyed by (seed, stream_id), so ensemble paths get their streams by index no
matter which worker runs them. Stable variates use the Kanter representation
(one uniform angle, one exponential) evaluated in log space.
"""
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import DomainError, TimeOverflow

_MASK64 = (1 << 64) - 1
_LOG_FLOAT_MAX = float(np.log(np.finfo(np.float64).max))


@dataclass
class RandomStream:
    seed: int
    stream_id: int
    start_counter: int = 0  # initial Philox block counter; live position is ``position``
    _generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        counter = np.array([self.start_counter & _MASK64, 0, 0, 0], dtype=np.uint64)
        self._generator = np.random.Generator(np.random.Philox(counter=counter, key=key))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    @property
    def position(self) -> int:
        """Low word of the Philox block counter (blocks consumed so far)."""
        return int(self._generator.bit_generator.state["state"]["counter"][0])

    def spawn(self, stream_id: int) -> "RandomStream":
        return RandomStream(seed=self.seed, stream_id=stream_id)


@dataclass(frozen=True)
class StableIncrement:
    value: float
    order: float
    dt: float


def _check_order(alpha) -> None:
    a = np.asarray(alpha, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a <= 0.0) or np.any(a >= 1.0):
        raise DomainError(f"stable order must lie in (0, 1), got {alpha!r}")


def log_positive_stable(
    alpha: float | np.ndarray,
    generator: np.random.Generator,
    size: int | tuple[int, ...] | None = None,
) -> np.ndarray:
    """
    Draw log S for one-sided stable S with E[exp(-lam S)] = exp(-lam**alpha).

    Args:
        alpha: order in (0, 1), scalar or array broadcast against ``size``.
        generator: numpy Generator; one uniform then one exponential block
            is consumed per call.
        size: output shape; defaults to the shape of ``alpha``.

    Returns:
        Array of log-variates (finite, may be large for small alpha).
    """
    alpha = np.asarray(alpha, dtype=float)
    shape = alpha.shape if size is None else size
    theta = np.pi * (1.0 - generator.random(shape))  # (0, pi]
    w = np.maximum(generator.standard_exponential(shape), np.finfo(float).tiny)

    one_minus = 1.0 - alpha
    log_a = (
        np.log(np.sin(one_minus * theta))
        + (alpha / one_minus) * np.log(np.sin(alpha * theta))
        - np.log(np.sin(theta)) / one_minus
    )
    return (one_minus / alpha) * (log_a - np.log(w))


def sample_gaussian(stream: RandomStream) -> float:
    return float(stream.generator.standard_normal())


def sample_positive_stable(alpha: float, stream: RandomStream) -> float:
    _check_order(alpha)
    log_s = float(log_positive_stable(alpha, stream.generator, size=()))
    if log_s >= _LOG_FLOAT_MAX:
        raise TimeOverflow(f"stable variate overflows float64 (alpha={alpha})")
    return float(np.exp(log_s))


def sample_stable_increment(alpha: float, dt: float, stream: RandomStream) -> StableIncrement:
    """Clock increment over an internal step dt with the order frozen at alpha."""
    _check_order(alpha)
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    log_s = float(log_positive_stable(alpha, stream.generator, size=()))
    log_value = np.log(dt) / alpha + log_s
    if log_value >= _LOG_FLOAT_MAX:
        raise TimeOverflow(f"increment dt^(1/alpha)*S overflows float64 (alpha={alpha}, dt={dt})")
    value = max(float(np.exp(log_value)), np.finfo(float).tiny)
    return StableIncrement(value=value, order=float(alpha), dt=float(dt))
