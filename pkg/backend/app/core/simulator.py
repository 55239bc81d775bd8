"""
Coupled simulation of the Brownian driver and its position-dependent clock.

Internal time advances in steps of dt. Over each step the clock order is
frozen at alpha(b_k) and the increment is drawn exactly from the frozen
stable law:

    b_{k+1}     = b_k + sqrt(dt) * N(0, 1)
    sigma_{k+1} = sigma_k + dt**(1/alpha(b_k)) * S

Steps are generated in vectorised blocks. External-time queries, occupation
records and internal checkpoints are resolved block by block, so a path
never has to be stored unless ``keep_path`` is requested.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from app.core.alpha_field import AlphaField
from app.core.errors import DomainError, PathTooShort, StepBudgetExhausted, TimeOverflow
from app.core.intervals import PointSet
from app.core.random_streams import RandomStream, log_positive_stable

logger = logging.getLogger(__name__)

SPLIT_KEY = "split"
_FIRST_BLOCK = 256


class ClockKind(str, Enum):
    STABLE = "stable"
    DRIFT = "drift"  # sigma(s) = s, identity time change


class PathStatus(str, Enum):
    COMPLETE = "complete"
    STEP_BUDGET_EXHAUSTED = "step_budget_exhausted"
    TIME_OVERFLOW = "time_overflow"


@dataclass(frozen=True)
class SimConfig:
    dt: float
    x0: float = 0.0
    target_external_time: float = 1.0
    max_steps: int = 10_000_000
    overflow_cap: float = 1e300
    clock: ClockKind = ClockKind.STABLE
    internal_horizon: float | None = None
    block_steps: int = 4096

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.max_steps < 1:
            raise DomainError("max_steps must be at least 1")
        if not self.target_external_time > 0:
            raise DomainError("target_external_time must be positive")
        if not self.overflow_cap > 0:
            raise DomainError("overflow_cap must be positive")
        if self.internal_horizon is not None and not self.internal_horizon > 0:
            raise DomainError("internal_horizon must be positive when given")
        if self.block_steps < 1:
            raise DomainError("block_steps must be at least 1")

    @property
    def horizon_steps(self) -> int:
        if self.internal_horizon is None:
            return 0
        return int(math.ceil(self.internal_horizon / self.dt - 1e-9))


@dataclass
class TimeChangedSample:
    external_times: np.ndarray
    positions: np.ndarray
    l_values: np.ndarray
    g_values: np.ndarray
    h_values: np.ndarray
    age: np.ndarray
    occupation: dict[str, np.ndarray] = field(default_factory=dict)  # exact int_0^t 1{X in set} ds

    @property
    def resolved(self) -> np.ndarray:
        return np.isfinite(self.h_values)

    @property
    def complete(self) -> bool:
        return bool(self.resolved.all())


@dataclass
class Checkpoints:
    internal_times: np.ndarray
    occupation: np.ndarray  # H_s of the split set
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma: np.ndarray

    def quantity(self, name: str) -> np.ndarray:
        table = {
            "H_t": self.occupation,
            "sigma1_of_H": self.sigma1,
            "sigma2_of_rest": self.sigma2,
            "sigma": self.sigma,
        }
        if name not in table:
            raise DomainError(f"unknown growth quantity '{name}'")
        return table[name]


@dataclass
class CoupledPath:
    dt: float
    n_steps: int
    b_final: float
    sigma_final: float
    sigma1_acc: float
    sigma2_acc: float
    occupation_internal: dict[str, float]
    status: PathStatus
    s: np.ndarray | None = None
    b: np.ndarray | None = None
    sigma: np.ndarray | None = None
    checkpoints: Checkpoints | None = None
    sample: TimeChangedSample | None = None
    field_hash: str = ""

    @classmethod
    def from_arrays(cls, *, b, sigma, dt: float, status: PathStatus = PathStatus.COMPLETE) -> CoupledPath:
        b = np.asarray(b, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        if b.shape != sigma.shape or sigma.size < 1 or sigma[0] != 0.0:
            raise DomainError("path arrays must share a shape and start at sigma_0 = 0")
        n = sigma.size - 1
        return cls(
            dt=dt,
            n_steps=n,
            b_final=float(b[-1]),
            sigma_final=float(sigma[-1]),
            sigma1_acc=0.0,
            sigma2_acc=float(sigma[-1]),
            occupation_internal={},
            status=status,
            s=np.arange(n + 1) * dt,
            b=b,
            sigma=sigma,
        )

    @property
    def complete(self) -> bool:
        return self.status is PathStatus.COMPLETE

    @property
    def steps(self) -> np.ndarray:
        """(n+1, 3) records of (s_k, b_k, sigma_k); needs a kept path."""
        if self.sigma is None:
            raise DomainError("path was simulated without keep_path")
        return np.column_stack((self.s, self.b, self.sigma))

    def raise_for_status(self) -> None:
        if self.status is PathStatus.STEP_BUDGET_EXHAUSTED:
            raise StepBudgetExhausted(f"clock reached {self.sigma_final:g} after {self.n_steps} steps")
        if self.status is PathStatus.TIME_OVERFLOW:
            raise TimeOverflow(f"clock overflowed after {self.n_steps} steps")


def _last_change(b_prev: np.ndarray, b_next: np.ndarray, sigma_prev: np.ndarray,
                 first_index: int, carry: float) -> np.ndarray:
    """
    sigma at the last position change seen by each index of a block.

    Index j (global ``first_index + i``) holds position b_next[i] on
    [sigma_prev[i], ...). A change is recorded when b_next differs from
    b_prev and the previous index already held an external position (j >= 2).
    """
    m = b_next.size
    changed = (b_next != b_prev) & (np.arange(first_index, first_index + m) >= 2)
    marks = np.where(changed, np.arange(m), -1)
    latest = np.maximum.accumulate(marks) if m else marks
    return np.where(latest >= 0, sigma_prev[np.clip(latest, 0, None)], carry)


class CoupledSimulator:
    """Run coupled (B, sigma) paths for one field and configuration."""

    def __init__(
        self,
        field: AlphaField,
        config: SimConfig,
        split_set: PointSet | None = None,
        tracked: Mapping[str, PointSet] | None = None,
    ):
        self.field = field
        self.config = config
        self.split_set = split_set
        self.tracked: dict[str, PointSet] = dict(tracked or {})
        if split_set is not None:
            self.tracked.setdefault(SPLIT_KEY, split_set)
        self._log_dt = math.log(config.dt)
        self._field_hash = field.fingerprint()

    # -------------------------------------------------------------------------
    # Increments
    # -------------------------------------------------------------------------

    def _increments(self, b_old: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        if self.config.clock is ClockKind.DRIFT:
            return np.full(b_old.size, self.config.dt)
        alpha = np.asarray(self.field.evaluate(b_old), dtype=float)
        log_inc = self._log_dt / alpha + log_positive_stable(alpha, gen, size=b_old.size)
        with np.errstate(over="ignore"):
            inc = np.exp(log_inc)
        return np.maximum(inc, np.finfo(float).tiny)

    @staticmethod
    def _enforce_strict(
        sigma_blk: np.ndarray, sigma_cur: float, c1: np.ndarray, c2: np.ndarray, in_split: np.ndarray
    ) -> None:
        # Increments below one ulp of sigma are promoted by whole ulps of the
        # accumulator that owns the step, so c1 + c2 == sigma stays exact.
        steps = np.diff(np.concatenate(([sigma_cur], sigma_blk)))
        bad = np.flatnonzero(steps <= 0)
        if not bad.size:
            return
        for i in range(int(bad[0]), sigma_blk.size):
            floor = sigma_blk[i - 1] if i > 0 else sigma_cur
            if sigma_blk[i] > floor:
                continue
            owner = c1 if in_split[i] else c2
            while c1[i] + c2[i] <= floor:
                owner[i] = np.nextafter(owner[i], np.inf)
            sigma_blk[i] = c1[i] + c2[i]

    # -------------------------------------------------------------------------
    # Main loop
    # -------------------------------------------------------------------------

    def run(
        self,
        stream: RandomStream,
        *,
        keep_path: bool = True,
        external_times=None,
        internal_times=None,
    ) -> CoupledPath:
        cfg = self.config
        gen = stream.generator
        sqrt_dt = math.sqrt(cfg.dt)
        horizon_steps = cfg.horizon_steps

        ext = None
        if external_times is not None:
            ext = np.asarray(external_times, dtype=float)
            if ext.ndim != 1 or np.any(np.diff(ext) < 0) or np.any(ext < 0):
                raise DomainError("external times must be nonnegative and ascending")
            n_ext = ext.size
            out_x = np.full(n_ext, np.nan)
            out_l = np.full(n_ext, np.nan)
            out_g = np.full(n_ext, np.nan)
            out_h = np.full(n_ext, np.nan)
            out_age = np.full(n_ext, np.nan)
            out_occ = {name: np.full(n_ext, np.nan) for name in self.tracked}
            next_ext = 0

        ck_idx = None
        if internal_times is not None:
            ck_times = np.asarray(internal_times, dtype=float)
            ck_idx = np.maximum(np.rint(ck_times / cfg.dt).astype(np.int64), 0)
            n_ck = ck_idx.size
            ck_h = np.full(n_ck, np.nan)
            ck_s1 = np.full(n_ck, np.nan)
            ck_s2 = np.full(n_ck, np.nan)
            ck_sigma = np.full(n_ck, np.nan)
            next_ck = 0
            while next_ck < n_ck and ck_idx[next_ck] == 0:
                ck_h[next_ck] = ck_s1[next_ck] = ck_s2[next_ck] = ck_sigma[next_ck] = 0.0
                next_ck += 1

        k = 0
        b_cur = float(cfg.x0)
        sig1 = sig2 = 0.0
        sigma_cur = 0.0
        lc_carry = 0.0
        counts = {name: 0 for name in self.tracked}
        occ_ext = {name: 0.0 for name in self.tracked}
        kept_b: list[np.ndarray] = [np.array([b_cur])] if keep_path else []
        kept_sigma: list[np.ndarray] = [np.array([0.0])] if keep_path else []
        status = None
        block = min(_FIRST_BLOCK, cfg.block_steps)

        while status is None:
            m = min(block, cfg.max_steps - k)
            block = min(2 * block, cfg.block_steps)

            b_new = b_cur + np.cumsum(sqrt_dt * gen.standard_normal(m))
            b_all = np.concatenate(([b_cur], b_new))
            b_old = b_all[:-1]
            inc = self._increments(b_old, gen)

            in_split = self.split_set.contains(b_old) if self.split_set is not None else np.zeros(m, dtype=bool)
            c1 = sig1 + np.cumsum(np.where(in_split, inc, 0.0))
            c2 = sig2 + np.cumsum(np.where(in_split, 0.0, inc))
            sigma_blk = c1 + c2

            overflow = ~np.isfinite(sigma_blk) | (sigma_blk > cfg.overflow_cap)
            first_over = int(np.argmax(overflow)) if overflow.any() else m
            done = sigma_blk > cfg.target_external_time
            if horizon_steps:
                done &= np.arange(k + 1, k + m + 1) >= horizon_steps
            first_done = int(np.argmax(done)) if done.any() else m

            if first_over < m and first_over <= first_done:
                m_eff = first_over
                status = PathStatus.TIME_OVERFLOW
            elif first_done < m:
                m_eff = first_done + 1
                status = PathStatus.COMPLETE
            else:
                m_eff = m
                if k + m >= cfg.max_steps:
                    status = PathStatus.STEP_BUDGET_EXHAUSTED
            if m_eff == 0:
                break

            b_new, b_old = b_new[:m_eff], b_old[:m_eff]
            c1, c2 = c1[:m_eff].copy(), c2[:m_eff].copy()
            sigma_blk = sigma_blk[:m_eff].copy()
            self._enforce_strict(sigma_blk, sigma_cur, c1, c2, in_split[:m_eff])
            sigma_prev = np.concatenate(([sigma_cur], sigma_blk[:-1]))
            members = {name: s.contains(b_all[: m_eff + 1]) for name, s in self.tracked.items()}

            if keep_path:
                kept_b.append(b_new)
                kept_sigma.append(sigma_blk)

            if ck_idx is not None and next_ck < n_ck:
                split_cum = np.cumsum(members[SPLIT_KEY][:-1]) if SPLIT_KEY in members else np.zeros(m_eff)
                base = counts.get(SPLIT_KEY, 0)
                while next_ck < n_ck and ck_idx[next_ck] <= k + m_eff:
                    i = int(ck_idx[next_ck] - k - 1)
                    ck_h[next_ck] = (base + split_cum[i]) * cfg.dt
                    ck_s1[next_ck] = c1[i]
                    ck_s2[next_ck] = c2[i]
                    ck_sigma[next_ck] = sigma_blk[i]
                    next_ck += 1

            if ext is not None and next_ext < n_ext:
                stop = int(np.searchsorted(ext, sigma_blk[-1], side="left"))
                if stop > next_ext:
                    t = ext[next_ext:stop]
                    local = np.searchsorted(sigma_blk, t, side="right")
                    lc = _last_change(b_old, b_new, sigma_prev, k + 1, lc_carry)
                    sel = slice(next_ext, stop)
                    out_x[sel] = b_new[local]
                    out_l[sel] = (k + 1 + local) * cfg.dt
                    out_g[sel] = sigma_prev[local]
                    out_h[sel] = sigma_blk[local]
                    out_age[sel] = t - lc[local]
                    hold = sigma_blk - sigma_prev
                    for name, memb in members.items():
                        held = memb[1:]
                        cum = occ_ext[name] + np.concatenate(([0.0], np.cumsum(np.where(held, hold, 0.0))))
                        out_occ[name][sel] = cum[local] + np.where(held[local], t - sigma_prev[local], 0.0)
                    next_ext = stop
                    lc_carry = float(lc[-1])
                else:
                    lc_carry = float(_last_change(b_old, b_new, sigma_prev, k + 1, lc_carry)[-1])
                for name, memb in members.items():
                    held = memb[1:]
                    occ_ext[name] += float(np.sum(np.where(held, sigma_blk - sigma_prev, 0.0)))

            for name, memb in members.items():
                counts[name] += int(np.count_nonzero(memb[:-1]))

            k += m_eff
            b_cur = float(b_new[-1])
            sig1, sig2 = float(c1[-1]), float(c2[-1])
            sigma_cur = float(sigma_blk[-1])

        if status is PathStatus.TIME_OVERFLOW:
            logger.warning("clock passed the overflow cap %.3g after %d steps; path truncated", cfg.overflow_cap, k)
        elif status is PathStatus.STEP_BUDGET_EXHAUSTED:
            logger.debug("step budget %d exhausted at sigma=%.4g", cfg.max_steps, sigma_cur)

        path = CoupledPath(
            dt=cfg.dt,
            n_steps=k,
            b_final=b_cur,
            sigma_final=sigma_cur,
            sigma1_acc=sig1,
            sigma2_acc=sig2,
            occupation_internal={name: counts[name] * cfg.dt for name in self.tracked},
            status=status,
            field_hash=self._field_hash,
        )
        if keep_path:
            path.b = np.concatenate(kept_b)
            path.sigma = np.concatenate(kept_sigma)
            path.s = np.arange(k + 1) * cfg.dt
        if ck_idx is not None:
            path.checkpoints = Checkpoints(
                internal_times=ck_idx * cfg.dt, occupation=ck_h, sigma1=ck_s1, sigma2=ck_s2, sigma=ck_sigma
            )
        if ext is not None:
            path.sample = TimeChangedSample(
                external_times=ext,
                positions=out_x,
                l_values=out_l,
                g_values=out_g,
                h_values=out_h,
                age=out_age,
                occupation=out_occ,
            )
        return path


def simulate_coupled(
    field: AlphaField,
    config: SimConfig,
    stream: RandomStream,
    *,
    split_set: PointSet | None = None,
    tracked: Mapping[str, PointSet] | None = None,
    keep_path: bool = True,
    external_times=None,
    internal_times=None,
) -> CoupledPath:
    simulator = CoupledSimulator(field, config, split_set=split_set, tracked=tracked)
    return simulator.run(stream, keep_path=keep_path, external_times=external_times, internal_times=internal_times)


def invert_time_change(path: CoupledPath, external_times) -> TimeChangedSample:
    """Evaluate L, X, g, h and the age on an ascending external grid from a kept path."""
    if path.sigma is None:
        raise DomainError("path was simulated without keep_path; use streamed external times")
    t = np.asarray(external_times, dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) < 0) or np.any(t < 0):
        raise DomainError("external times must be nonnegative and ascending")
    if t.size and t[-1] >= path.sigma_final:
        raise PathTooShort(f"external time {t[-1]:g} is not below the final clock value {path.sigma_final:g}")

    sigma, b = path.sigma, path.b
    idx = np.searchsorted(sigma, t, side="right")
    lc = np.concatenate(([0.0], _last_change(b[:-1], b[1:], sigma[:-1], 1, 0.0)))
    return TimeChangedSample(
        external_times=t,
        positions=b[idx],
        l_values=idx * path.dt,
        g_values=sigma[idx - 1],
        h_values=sigma[idx],
        age=t - lc[idx],
    )


def occupation_fraction(sample: TimeChangedSample, target: PointSet, t: float) -> float:
    """Left-endpoint quadrature of 1{X in target} over the external grid, divided by t."""
    times = sample.external_times
    if not t > 0:
        raise DomainError("occupation time horizon must be positive")
    if times.size == 0 or t > times[-1] or times[0] >= t:
        raise DomainError(f"t={t:g} is not covered by the external grid")
    mask = times < t
    edges = np.append(times[mask], t)
    widths = np.diff(edges)
    widths[0] += edges[0]  # [0, t_0) takes the earliest recorded position
    inside = target.contains(sample.positions[mask])
    return float(np.clip(np.sum(widths * inside) / t, 0.0, 1.0))


def geometric_grid(t_min: float, t_max: float, n: int = 200) -> np.ndarray:
    if not 0 < t_min < t_max or n < 2:
        raise DomainError("geometric grid needs 0 < t_min < t_max and n >= 2")
    return np.geomspace(t_min, t_max, n)
