"""
Ensemble service: occupation statistics, growth-exponent fits and regime checks.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import statsmodels.api as sm
from scipy.stats import norm

from app.core.alpha_field import AlphaField, MinStructure, RegimeKind, classify_regime
from app.core.errors import DomainError, ExperimentAborted, InsufficientRange
from app.core.intervals import IntervalUnion, PointSet, union_of
from app.core.random_streams import RandomStream
from app.core.simulator import CoupledPath, CoupledSimulator, PathStatus, SimConfig, geometric_grid, occupation_fraction
from app.schemas.report import EnsembleSummary, PredictionSummary, RegimeReport, SlopeFit, Verdict

logger = logging.getLogger(__name__)

_TARGET = "target"
_Z95 = float(norm.ppf(0.975))
MAX_INCOMPLETE_FRACTION = 0.10
MIN_FIT_POINTS = 10
MIN_FIT_DECADES = 2.0
GROWTH_QUANTITIES = ("H_t", "sigma1_of_H", "sigma2_of_rest", "sigma")


@dataclass
class _PathOutcome:
    index: int
    status: PathStatus
    occ: np.ndarray | None = None
    hit: np.ndarray | None = None
    extra_hit: dict | None = None


def _sorted_mean_std(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column mean/std of a (paths, t) array, independent of row order."""
    ordered = np.sort(values, axis=0)
    mean = ordered.mean(axis=0)
    std = ordered.std(axis=0, ddof=1) if ordered.shape[0] > 1 else np.full(ordered.shape[1], np.inf)
    return mean, std


def map_paths(fn, n_paths: int, threads: int):
    if threads <= 1:
        return [fn(i) for i in range(n_paths)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_paths)))


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------


def run_ensemble(
    field: AlphaField,
    config: SimConfig,
    n_paths: int,
    target_set: PointSet,
    base_seed: int,
    *,
    external_times=None,
    threads: int = 1,
    occupation: str = "exact",
    extra_sets: dict[str, PointSet] | None = None,
) -> EnsembleSummary:
    """
    Occupation fraction and hit probability of ``target_set`` on an external grid.

    Path i uses stream (base_seed, i). Incomplete paths are dropped and
    counted; more than 10% incomplete aborts the experiment.
    """
    if n_paths < 1:
        raise DomainError("n_paths must be at least 1")
    if occupation not in ("exact", "quadrature"):
        raise DomainError(f"unknown occupation method '{occupation}'")
    t_grid = (
        np.asarray(external_times, dtype=float)
        if external_times is not None
        else geometric_grid(config.target_external_time * 1e-4, config.target_external_time)
    )
    if t_grid[-1] > config.target_external_time:
        raise DomainError("external grid extends past the configured target time")
    extra_sets = dict(extra_sets or {})
    simulator = CoupledSimulator(field, config, tracked={_TARGET: target_set})

    def simulate_one(index: int) -> _PathOutcome:
        path = simulator.run(RandomStream(seed=base_seed, stream_id=index), keep_path=False, external_times=t_grid)
        if not path.complete:
            return _PathOutcome(index=index, status=path.status)
        sample = path.sample
        if occupation == "exact":
            occ = sample.occupation[_TARGET] / t_grid
        else:
            occ = np.array([occupation_fraction(sample, target_set, t) for t in t_grid])
        return _PathOutcome(
            index=index,
            status=path.status,
            occ=np.clip(occ, 0.0, 1.0),
            hit=target_set.contains(sample.positions),
            extra_hit={name: s.contains(sample.positions) for name, s in extra_sets.items()},
        )

    outcomes = map_paths(simulate_one, n_paths, threads)
    done = [o for o in outcomes if o.status is PathStatus.COMPLETE]
    n_incomplete = n_paths - len(done)
    if n_incomplete:
        logger.warning("%d of %d paths incomplete (excluded)", n_incomplete, n_paths)
    if n_incomplete > MAX_INCOMPLETE_FRACTION * n_paths or not done:
        raise ExperimentAborted(f"{n_incomplete} of {n_paths} paths did not reach t={config.target_external_time:g}")

    n = len(done)
    occ_mean, occ_std = _sorted_mean_std(np.vstack([o.occ for o in done]))
    occ_hw = _Z95 * occ_std / math.sqrt(n)

    def proportion(rows: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        p = np.vstack(rows).sum(axis=0) / n
        hw = _Z95 * np.sqrt(p * (1.0 - p) / n) if n > 1 else np.full(p.shape, np.inf)
        return p, hw

    hit_p, hit_hw = proportion([o.hit for o in done])
    extra = {name: proportion([o.extra_hit[name] for o in done])[0].tolist() for name in extra_sets}

    return EnsembleSummary(
        n_paths=n,
        n_incomplete=n_incomplete,
        t_grid=t_grid.tolist(),
        occ_mean=np.clip(occ_mean, 0.0, 1.0).tolist(),
        occ_ci_halfwidth=occ_hw.tolist(),
        hit_prob=hit_p.tolist(),
        hit_ci_halfwidth=hit_hw.tolist(),
        extra_hit_prob=extra,
        occupation_method=occupation,
    )


# ---------------------------------------------------------------------------
# Growth exponents
# ---------------------------------------------------------------------------


def simulate_growth_paths(
    field: AlphaField,
    config: SimConfig,
    n_paths: int,
    split_set: PointSet,
    t_grid,
    base_seed: int,
    *,
    threads: int = 1,
) -> list[CoupledPath]:
    """Paths run to the last internal grid time with checkpoints on ``t_grid``.

    The external target is ignored; the internal horizon alone ends a path.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    horizon = float(t_grid[-1])
    cfg = SimConfig(
        dt=config.dt,
        x0=config.x0,
        target_external_time=float(np.finfo(float).tiny),
        max_steps=max(config.max_steps, int(math.ceil(horizon / config.dt)) + 1),
        overflow_cap=config.overflow_cap,
        clock=config.clock,
        internal_horizon=horizon,
        block_steps=config.block_steps,
    )
    simulator = CoupledSimulator(field, cfg, split_set=split_set)
    return map_paths(
        lambda i: simulator.run(RandomStream(seed=base_seed, stream_id=i), keep_path=False, internal_times=t_grid),
        n_paths,
        threads,
    )


def nominal_exponent(quantity: str, structure: MinStructure | None, alpha: float | None = None) -> float | None:
    """Growth exponent predicted for ``quantity``; ``alpha`` is used for constant fields."""
    if quantity == "sigma":
        return 1.0 / alpha if alpha else None
    if structure is None:
        return None
    c1 = structure.growth.c1 if structure.growth is not None else 0.0
    if quantity == "H_t":
        return (1.0 + c1) / 2.0
    if quantity == "sigma1_of_H":
        return (1.0 + c1) / (2.0 * structure.alpha_star)
    if quantity == "sigma2_of_rest":
        return 1.0 / structure.alpha_outer
    return None


def fit_growth_exponent(paths: list[CoupledPath], quantity: str, t_grid, *, robust: bool = False) -> SlopeFit:
    """Least-squares slope of the path-averaged log quantity against log t."""
    if quantity not in GROWTH_QUANTITIES:
        raise DomainError(f"quantity must be one of {GROWTH_QUANTITIES}")
    t = np.asarray(t_grid, dtype=float)
    if t.size < MIN_FIT_POINTS or t[0] <= 0 or math.log10(t[-1] / t[0]) < MIN_FIT_DECADES:
        raise InsufficientRange(
            f"fit needs >= {MIN_FIT_POINTS} points over >= {MIN_FIT_DECADES:g} decades; got {t.size} points"
        )

    rows = []
    for path in paths:
        if path.checkpoints is None:
            raise DomainError("paths must carry checkpoints on the fit grid")
        values = path.checkpoints.quantity(quantity)
        if values.shape == t.shape and np.all(np.isfinite(values)) and np.all(values > 0):
            rows.append(np.log(values))
    if not rows:
        raise InsufficientRange(f"no path has positive {quantity} on the whole grid")

    logs = np.sort(np.vstack(rows), axis=0)
    log_q = np.median(logs, axis=0) if robust else logs.mean(axis=0)
    log_t = np.log(t)
    result = sm.OLS(log_q, sm.add_constant(log_t)).fit()
    return SlopeFit(
        quantity=quantity,
        log_t=log_t.tolist(),
        log_q=log_q.tolist(),
        slope=float(result.params[1]),
        slope_stderr=float(result.bse[1]),
        intercept=float(result.params[0]),
        n_paths_used=len(rows),
        robust=robust,
    )


# ---------------------------------------------------------------------------
# Regime verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegimeCheckOptions:
    k_radius: float = 10.0
    base_seed: int = 0
    threads: int = 1
    high: float = 0.8
    low: float = 0.2
    max_halfwidth: float = 0.1
    decades: int = 3
    n_points: int = 200


def _trend(values: np.ndarray, halfwidths: np.ndarray) -> str:
    """
    Monotone within the CI at each step, with a net change larger than the
    combined half-widths of the first and last values.
    """
    values = np.asarray(values, dtype=float)
    halfwidths = np.asarray(halfwidths, dtype=float)
    up = all(values[i + 1] >= values[i] - halfwidths[i + 1] for i in range(len(values) - 1))
    down = all(values[i + 1] <= values[i] + halfwidths[i + 1] for i in range(len(values) - 1))
    net = float(values[-1] - values[0])
    margin = math.hypot(halfwidths[0], halfwidths[-1])
    if up and net > margin:
        return "increasing"
    if down and -net > margin:
        return "decreasing"
    return "none"


def _regime_verdict(kind: RegimeKind, trend: str, occ: float, hit: float, opts: RegimeCheckOptions) -> Verdict:
    """
    Consistent needs the predicted trend and the threshold. Inconsistent needs
    evidence against the prediction: the opposite trend, or a flat curve
    already past the opposite threshold. Anything else is inconclusive.
    """
    if kind is RegimeKind.DELOCALIZE:
        if trend == "decreasing" and occ < opts.low:
            return Verdict.CONSISTENT
        if trend == "increasing" or (trend == "none" and occ > opts.high):
            return Verdict.INCONSISTENT
        return Verdict.INCONCLUSIVE
    reached = occ > opts.high and (kind is not RegimeKind.LOCALIZE_PROBABILITY or hit > opts.high)
    if trend == "increasing" and reached:
        return Verdict.CONSISTENT
    if trend == "decreasing" or (trend == "none" and occ < opts.low):
        return Verdict.INCONSISTENT
    return Verdict.INCONCLUSIVE


def verify_regime(
    field: AlphaField,
    structure: MinStructure,
    config: SimConfig,
    n_paths: int,
    options: RegimeCheckOptions | None = None,
) -> RegimeReport:
    opts = options or RegimeCheckOptions()
    prediction = classify_regime(structure)
    if prediction.kind is RegimeKind.CRITICAL:
        raise DomainError("critical case (equality in the regime condition) has no predicted direction")

    t_final = config.target_external_time
    t_grid = geometric_grid(t_final * 10.0 ** -(opts.decades + 1), t_final, opts.n_points)
    if prediction.kind is RegimeKind.DELOCALIZE:
        target = union_of(prediction.target_set, IntervalUnion.from_pairs([(-opts.k_radius, opts.k_radius)]))
    else:
        target = prediction.target_set
    extra = {"escape": prediction.escape_set} if prediction.escape_set is not None else {}

    logger.info("verifying %s with %d paths up to t=%g", prediction.kind.value, n_paths, t_final)
    summary = run_ensemble(
        field, config, n_paths, target, opts.base_seed, external_times=t_grid, threads=opts.threads, extra_sets=extra
    )

    occ = np.asarray(summary.occ_mean)
    occ_hw = np.asarray(summary.occ_ci_halfwidth)
    hit = np.asarray(summary.hit_prob)
    hit_hw = np.asarray(summary.hit_ci_halfwidth)
    decade_times = t_final * 10.0 ** -np.arange(opts.decades, -1, -1)
    picks = np.array([int(np.argmin(np.abs(np.log(t_grid) - math.log(d)))) for d in decade_times])
    trend = _trend(occ[picks], occ_hw[picks])

    uses_hit = prediction.kind is RegimeKind.LOCALIZE_PROBABILITY
    if occ_hw[-1] > opts.max_halfwidth or (uses_hit and hit_hw[-1] > opts.max_halfwidth):
        verdict = Verdict.INCONCLUSIVE
    else:
        verdict = _regime_verdict(prediction.kind, trend, float(occ[-1]), float(hit[-1]), opts)

    escape = summary.extra_hit_prob.get("escape")
    return RegimeReport(
        prediction=PredictionSummary(
            kind=prediction.kind.value,
            condition_lhs=prediction.condition_lhs,
            condition_rhs=prediction.condition_rhs,
            target=str(target),
        ),
        occ_final=float(occ[-1]),
        hit_final=float(hit[-1]),
        occ_ci_final=float(occ_hw[-1]),
        hit_ci_final=float(hit_hw[-1]),
        escape_hit_final=float(escape[-1]) if escape else None,
        trend=trend,
        decade_times=[float(t_grid[i]) for i in picks],
        decade_occ=[float(occ[i]) for i in picks],
        verdict=verdict,
        summary=summary,
    )
