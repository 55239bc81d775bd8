"""
Validation service: Monte Carlo against the PDE solver, plus the oracle suite
(stable sampler, Mittag-Leffler identities, heat-equation reduction).
"""
import logging
import math

import numpy as np
from scipy.special import erfc, erfcx
from scipy.stats import kstest, levy

from app.core.alpha_field import AlphaField, two_level_field
from app.core.errors import DomainError, ExperimentAborted
from app.core.initial_conditions import InitialCondition, initial_condition
from app.core.mittag_leffler import mittag_leffler
from app.core.pde_solver import Boundary, FieldSolution, Grid1D, mild_residual, solve_fde
from app.core.random_streams import RandomStream, log_positive_stable
from app.core.simulator import CoupledSimulator, PathStatus, SimConfig
from app.schemas.report import ComparisonPoint, McPdeComparison, ValidationCheck, ValidationReport
from app.services.ensemble_service import MAX_INCOMPLETE_FRACTION, map_paths

logger = logging.getLogger(__name__)

LAPLACE_ORDERS = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
LAPLACE_RATES = (0.25, 0.5, 1.0, 2.0, 4.0)


def constant_order(field: AlphaField | float) -> float | None:
    if isinstance(field, AlphaField):
        return field.alpha_star if field.is_constant else None
    return float(field)


def eigenmode_oracle(alpha: float, k: float, T: float) -> float:
    """Decay factor of cos(kx) under d^alpha/dt^alpha q = 1/2 q_xx."""
    return mittag_leffler(alpha, -0.5 * k * k * T**alpha)


# ---------------------------------------------------------------------------
# Monte Carlo against PDE
# ---------------------------------------------------------------------------


def _mc_mean_at(
    field: AlphaField | float,
    initial: InitialCondition,
    x0: float,
    T: float,
    sim: SimConfig,
    n_paths: int,
    base_seed: int,
    first_stream: int,
    threads: int,
) -> tuple[float, float]:
    if not isinstance(field, AlphaField):
        raise DomainError("Monte Carlo needs an AlphaField, not a bare order")
    cfg = SimConfig(
        dt=sim.dt,
        x0=x0,
        target_external_time=T,
        max_steps=sim.max_steps,
        overflow_cap=sim.overflow_cap,
        clock=sim.clock,
        block_steps=sim.block_steps,
    )
    simulator = CoupledSimulator(field, cfg)
    ext = np.array([T])

    def one(i: int):
        path = simulator.run(RandomStream(seed=base_seed, stream_id=first_stream + i), keep_path=False, external_times=ext)
        return path.status, (path.sample.positions[-1] if path.complete else np.nan)

    outcomes = map_paths(one, n_paths, threads)
    positions = np.array([x for status, x in outcomes if status is PathStatus.COMPLETE])
    n_bad = n_paths - positions.size
    if n_bad > MAX_INCOMPLETE_FRACTION * n_paths or positions.size == 0:
        raise ExperimentAborted(f"{n_bad} of {n_paths} paths from x={x0:g} did not reach T={T:g}")
    values = np.sort(initial(positions))
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.inf
    return mean, se


def compare_mc_pde(
    field: AlphaField,
    grid: Grid1D,
    initial: InitialCondition,
    T: float,
    mc_ensemble_per_x: int,
    tolerance: float = 0.02,
    *,
    sim: SimConfig,
    pde_dt: float,
    start_points=None,
    base_seed: int = 0,
    threads: int = 1,
    solution: FieldSolution | None = None,
) -> McPdeComparison:
    """
    E[u(X(T)) | X(0) = x_r] by simulation against q(T, x_r) from the solver.

    Start points snap to the nearest grid node. For a constant order and a
    cos mode the Mittag-Leffler closed form joins the comparison. A point
    passes when every pairwise gap is within max(3 SE, tolerance * max|u|).
    """
    if solution is None:
        solution = solve_fde(field, grid, initial, T, pde_dt)
    nodes = grid.nodes
    points = [0.5 * (grid.x_min + grid.x_max)] if start_points is None else list(start_points)
    alpha = constant_order(field)
    k = initial.wavenumber
    scale = tolerance * max(float(np.max(np.abs(solution.initial))), 1e-12)

    results = []
    for r, x in enumerate(points):
        i = int(np.argmin(np.abs(nodes - x)))
        x_r = float(nodes[i])
        mc, se = _mc_mean_at(field, initial, x_r, T, sim, mc_ensemble_per_x, base_seed, r * mc_ensemble_per_x, threads)
        pde = float(solution.final[i])
        oracle = None
        if alpha is not None and k is not None:
            oracle = initial.params["amplitude"] * eigenmode_oracle(alpha, k, T) * math.cos(k * x_r)
        gaps = [abs(mc - pde)] + ([abs(mc - oracle), abs(pde - oracle)] if oracle is not None else [])
        allowed = max(3.0 * se, scale)
        results.append(
            ComparisonPoint(
                x=x_r, mc_mean=mc, mc_stderr=se, pde=pde, oracle=oracle,
                discrepancy=max(gaps), allowed=allowed, passed=max(gaps) <= allowed,
            )
        )
        logger.info("x=%.4g: mc=%.5f (se %.2g) pde=%.5f oracle=%s", x_r, mc, se, pde, oracle)

    return McPdeComparison(
        T=T,
        n_paths=mc_ensemble_per_x,
        points=results,
        max_discrepancy=max(p.discrepancy for p in results),
        passed=all(p.passed for p in results),
    )


# ---------------------------------------------------------------------------
# Oracle suite
# ---------------------------------------------------------------------------


def _check(name: str, value: float, expected: float, tolerance: float, detail: str = "") -> ValidationCheck:
    return ValidationCheck(
        name=name, value=value, expected=expected, tolerance=tolerance,
        passed=bool(abs(value - expected) <= tolerance), detail=detail,
    )


def laplace_checks(
    seed: int, n_samples: int, orders=LAPLACE_ORDERS, lams=LAPLACE_RATES
) -> list[ValidationCheck]:
    checks = []
    for i, alpha in enumerate(orders):
        gen = RandomStream(seed=seed, stream_id=i).generator
        s = np.exp(log_positive_stable(alpha, gen, size=n_samples))
        for lam in lams:
            values = np.exp(-lam * s)
            se = float(values.std(ddof=1) / math.sqrt(n_samples))
            checks.append(
                _check(f"laplace[alpha={alpha:g},lam={lam:g}]", float(values.mean()), math.exp(-(lam**alpha)), 4.0 * se)
            )
    return checks


def half_stable_ks_check(seed: int, n_samples: int) -> ValidationCheck:
    """alpha = 1/2 variates against the Levy law with scale 1/2 (Laplace exp(-sqrt(lam)))."""
    gen = RandomStream(seed=seed, stream_id=1000).generator
    s = np.exp(log_positive_stable(0.5, gen, size=n_samples))
    result = kstest(s, levy(scale=0.5).cdf)
    return ValidationCheck(
        name="ks[alpha=0.5]", value=float(result.pvalue), expected=1.0, tolerance=1.0 - 1e-3,
        passed=bool(result.pvalue > 1e-3), detail=f"statistic={result.statistic:.4g}",
    )


def mittag_leffler_checks() -> list[ValidationCheck]:
    tol = 1e-8
    return [
        _check("ml[E_1(-1)]", mittag_leffler(1.0, -1.0), math.exp(-1.0), tol),
        _check("ml[E_0.3(0)]", mittag_leffler(0.3, 0.0), 1.0, tol),
        _check("ml[E_0.5(-1)]", mittag_leffler(0.5, -1.0), math.e * float(erfc(1.0)), tol),
        _check("ml[E_0.5(-3)]", mittag_leffler(0.5, -3.0), float(erfcx(3.0)), tol),
        _check("ml[E_0.5(-20)]", mittag_leffler(0.5, -20.0), float(erfcx(20.0)), tol),
    ]


def heat_reduction_check(T: float = 0.5, dt: float = 1e-3, n_x: int = 64) -> ValidationCheck:
    grid = Grid1D(-math.pi, math.pi, n_x, Boundary.PERIODIC)
    sol = solve_fde(1.0, grid, initial_condition("cos", k=1.0), T, dt)
    return _check("heat[order=1]", sol.at(0.0), math.exp(-0.5 * T), 1e-3, "backward Euler vs exp(-k^2 T/2)")


def eigenmode_check(alpha: float = 0.5, T: float = 1.0, dt: float = 1e-3, n_x: int = 64) -> ValidationCheck:
    grid = Grid1D(-math.pi, math.pi, n_x, Boundary.PERIODIC)
    sol = solve_fde(alpha, grid, initial_condition("cos", k=1.0), T, dt)
    return _check(f"eigenmode[alpha={alpha:g}]", sol.at(0.0), eigenmode_oracle(alpha, 1.0, T), 2e-3)


def constants_checks(n_x: int = 40, T: float = 1.0, dt: float = 0.02) -> list[ValidationCheck]:
    field = two_level_field(0.3, 0.7)
    grid = Grid1D(-2.0, 3.0, n_x, Boundary.NEUMANN0)
    sol = solve_fde(field, grid, np.ones(n_x), T, dt)
    return [
        _check("constants[neumann0]", float(np.max(np.abs(sol.q - 1.0))), 0.0, 1e-12),
        _check("mild_residual[constant]", mild_residual(sol), 0.0, 1e-10),
    ]


def run_validation_suite(seed: int = 0, n_samples: int = 1_000_000) -> ValidationReport:
    logger.info("running oracle suite (seed=%d, %d samples per order)", seed, n_samples)
    checks = [
        *laplace_checks(seed, n_samples),
        half_stable_ks_check(seed, n_samples),
        *mittag_leffler_checks(),
        heat_reduction_check(),
        eigenmode_check(),
        *constants_checks(),
    ]
    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.warning("oracle checks failed: %s", ", ".join(failed))
    return ValidationReport(checks=checks)
