"""
Experiment service: run one configured experiment end to end, and track
experiments started over HTTP as background jobs.
"""
import asyncio
import logging
import math
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
from fastapi import BackgroundTasks

from app.config import settings
from app.core import export_service
from app.core.alpha_field import AlphaField, RegimeKind, classify_regime
from app.core.errors import DomainError, ExperimentAborted
from app.core.pde_solver import mild_residual, solve_fde
from app.core.random_streams import RandomStream
from app.core.simulator import CoupledSimulator, PathStatus, SimConfig, geometric_grid, invert_time_change
from app.schemas.experiment import ExperimentConfig, ExperimentJobStatus
from app.schemas.report import Verdict
from app.services import config_service, ensemble_service, validation_service

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAIL = 2
EXIT_INCONCLUSIVE = 3

GROWTH_REL_TOL = 0.10
MAX_PRINCIPLE_TOL = 1e-10

_VERDICT_EXIT = {
    Verdict.CONSISTENT: EXIT_OK,
    Verdict.INCONSISTENT: EXIT_FAIL,
    Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}


@dataclass
class ExperimentResult:
    experiment: str
    exit_code: int
    verdict: str | None = None
    summary: list[str] = field(default_factory=list)
    artifacts: list[Path] = field(default_factory=list)


@dataclass
class _Run:
    cfg: ExperimentConfig
    cfg_hash: str
    out_dir: Path
    result: ExperimentResult

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.output.formats

    def write_csv(self, suffix: str, df: pd.DataFrame, **meta) -> None:
        if not self.wants("csv"):
            return
        meta = {"experiment": self.cfg.experiment, "seed": self.cfg.sim.seed, **meta}
        target = self.out_dir / f"{self.cfg.label}_{suffix}.csv"
        self.result.artifacts.append(export_service.write_csv(target, df, cfg_hash=self.cfg_hash, meta=meta))

    def dump(self, suffix: str, writer, *args) -> None:
        if self.wants("dump"):
            target = self.out_dir / f"{self.cfg.label}_{suffix}.bin"
            self.result.artifacts.append(writer(target, *args, cfg_hash=self.cfg_hash))

    def say(self, line: str) -> None:
        self.result.summary.append(line)


def experiment_hash(cfg: ExperimentConfig) -> str:
    """Hash of everything that changes results; thread count and output location are excluded."""
    payload = cfg.model_dump(mode="json", exclude={"threads": True, "output": {"directory"}})
    return export_service.config_hash(payload)


def _field(cfg: ExperimentConfig) -> AlphaField:
    return config_service.build_field(cfg.field)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _simulate(run: _Run) -> None:
    cfg = run.cfg
    fld = _field(cfg)
    sim = config_service.build_sim_config(cfg)
    simulator = CoupledSimulator(fld, sim)

    path = simulator.run(RandomStream(seed=cfg.sim.seed, stream_id=0), keep_path=True)
    path.raise_for_status()
    t_grid = np.linspace(0.0, cfg.sim.t_final, cfg.sim.n_times)
    sample = invert_time_change(path, t_grid)
    run.write_csv("path", export_service.build_path_frame(path))
    run.write_csv("sample", export_service.build_sample_frame(sample))
    run.dump("path", export_service.dump_path, path)

    rows = []
    for i in range(cfg.sim.n_paths):
        p = simulator.run(RandomStream(seed=cfg.sim.seed, stream_id=i), keep_path=False, external_times=[cfg.sim.t_final])
        rows.append(
            {
                "path": i,
                "status": p.status.value,
                "steps": p.n_steps,
                "sigma_final": p.sigma_final,
                "x_at_t_final": float(p.sample.positions[-1]) if p.complete else np.nan,
                "L_at_t_final": float(p.sample.l_values[-1]) if p.complete else np.nan,
            }
        )
    finals = pd.DataFrame(rows)
    run.write_csv("finals", finals)

    n_bad = int((finals["status"] != PathStatus.COMPLETE.value).sum())
    run.say(f"path 0: {path.n_steps} steps, sigma={path.sigma_final:.6g}, X(t_final)={sample.positions[-1]:.6g}")
    run.say(f"{cfg.sim.n_paths} paths, {n_bad} incomplete")
    run.result.exit_code = EXIT_OK if n_bad == 0 else EXIT_FAIL


def _occupation(run: _Run) -> None:
    cfg = run.cfg
    fld = _field(cfg)
    sim = config_service.build_sim_config(cfg)
    target = config_service.resolve_target(fld, cfg)
    t_grid = geometric_grid(cfg.sim.t_final * 1e-3, cfg.sim.t_final, cfg.sim.n_times)
    summary = ensemble_service.run_ensemble(
        fld, sim, cfg.sim.n_paths, target, cfg.sim.seed,
        external_times=t_grid, threads=cfg.threads, occupation=cfg.sim.occupation,
    )
    run.write_csv("occupation", export_service.build_ensemble_frame(summary), target=str(target))
    run.say(f"target {target}: occupation {summary.occ_mean[-1]:.4f} +/- {summary.occ_ci_halfwidth[-1]:.4f}")
    run.say(f"hit probability {summary.hit_prob[-1]:.4f} +/- {summary.hit_ci_halfwidth[-1]:.4f}")
    run.say(f"{summary.n_paths} paths used, {summary.n_incomplete} incomplete")
    run.result.exit_code = EXIT_OK


def _growth(run: _Run) -> None:
    cfg = run.cfg
    fld = _field(cfg)
    spec = cfg.sim.growth
    split = config_service.resolve_target(fld, cfg)
    try:
        structure = fld.min_structure()
    except DomainError:
        structure = None
    alpha = fld.alpha_star if fld.is_constant else None

    t_grid = geometric_grid(spec.t_min, spec.t_max, spec.n_points)
    paths = ensemble_service.simulate_growth_paths(
        fld, config_service.build_sim_config(cfg), cfg.sim.n_paths, split, t_grid, cfg.sim.seed, threads=cfg.threads
    )
    done = [p for p in paths if p.complete]
    if len(paths) - len(done) > ensemble_service.MAX_INCOMPLETE_FRACTION * len(paths):
        raise ExperimentAborted(f"{len(paths) - len(done)} of {len(paths)} growth paths incomplete")

    fits, ok = [], True
    for quantity in spec.quantities:
        fit = ensemble_service.fit_growth_exponent(done, quantity, t_grid, robust=spec.robust)
        fit.nominal = ensemble_service.nominal_exponent(quantity, structure, alpha)
        fits.append(fit)
        note = ""
        if fit.nominal is not None:
            within = abs(fit.slope - fit.nominal) <= GROWTH_REL_TOL * fit.nominal
            ok &= within
            note = f" (nominal {fit.nominal:.4g}, {'ok' if within else 'off'})"
        run.say(f"{quantity}: slope {fit.slope:.4f} +/- {fit.slope_stderr:.4f}{note}")
    run.write_csv("growth", export_service.build_slope_frame(fits))
    run.write_csv(
        "growth_curves",
        pd.DataFrame({"t": t_grid, **{f"log_{f.quantity}": f.log_q for f in fits}}),
    )
    run.result.exit_code = EXIT_OK if ok else EXIT_FAIL
    run.result.verdict = (Verdict.CONSISTENT if ok else Verdict.INCONSISTENT).value


def _regime(run: _Run) -> None:
    cfg = run.cfg
    fld = _field(cfg)
    structure = fld.min_structure()
    prediction = classify_regime(structure)
    run.say(f"prediction: {prediction.kind.value} ({prediction.condition_lhs:.4g} vs {prediction.condition_rhs:.4g})")
    if prediction.kind is RegimeKind.CRITICAL:
        run.say("critical case: the regime condition holds with equality, no direction to test")
        run.result.verdict = Verdict.INCONCLUSIVE.value
        run.result.exit_code = EXIT_INCONCLUSIVE
        return

    spec = cfg.sim.regime
    options = ensemble_service.RegimeCheckOptions(
        k_radius=cfg.sim.k_radius,
        base_seed=cfg.sim.seed,
        threads=cfg.threads,
        high=spec.high,
        low=spec.low,
        max_halfwidth=spec.max_halfwidth,
        decades=spec.decades,
        n_points=spec.n_points,
    )
    report = ensemble_service.verify_regime(fld, structure, config_service.build_sim_config(cfg), cfg.sim.n_paths, options)
    run.write_csv("regime", export_service.build_regime_summary_frame(report))
    run.write_csv("regime_ensemble", export_service.build_ensemble_frame(report.summary))
    run.say(f"target {report.prediction.target}")
    run.say(f"occupation {report.occ_final:.4f} +/- {report.occ_ci_final:.4f}, trend {report.trend}")
    run.say(f"hit probability {report.hit_final:.4f} +/- {report.hit_ci_final:.4f}")
    if report.escape_hit_final is not None:
        run.say(f"escape-set hit probability {report.escape_hit_final:.4f}")
    run.say(f"verdict: {report.verdict.value}")
    run.result.verdict = report.verdict.value
    run.result.exit_code = _VERDICT_EXIT[report.verdict]


def _pde(run: _Run) -> None:
    cfg = run.cfg
    fld = _field(cfg)
    pde = cfg.pde
    grid = config_service.build_grid(pde)
    initial = config_service.build_initial(pde)
    solution = solve_fde(fld, grid, initial, pde.T, pde.dt)

    residual = mild_residual(solution)
    lo, hi = float(solution.initial.min()), float(solution.initial.max())
    bounded = bool(
        np.all(solution.q >= lo - MAX_PRINCIPLE_TOL) and np.all(solution.q <= hi + MAX_PRINCIPLE_TOL)
    )
    run.write_csv("solution", export_service.build_solution_frame(solution, cfg.output.solution_every))
    run.dump("solution", export_service.dump_solution, solution, fld.fingerprint())

    run.say(f"{len(solution.t_grid) - 1} steps on {grid.n_x} nodes ({grid.boundary.value})")
    run.say(f"mild residual {residual:.3e}")
    run.say(f"maximum principle {'holds' if bounded else 'VIOLATED'}")
    alpha = validation_service.constant_order(fld)
    if alpha is not None and initial.wavenumber is not None:
        k = initial.wavenumber
        exact = initial.params["amplitude"] * validation_service.eigenmode_oracle(alpha, k, pde.T) * np.cos(k * grid.nodes)
        run.say(f"eigenmode error {float(np.max(np.abs(solution.final - exact))):.3e}")
    run.result.exit_code = EXIT_OK if bounded and math.isfinite(residual) else EXIT_FAIL


def _validate(run: _Run) -> None:
    report = validation_service.run_validation_suite(seed=run.cfg.sim.seed)
    run.write_csv("validation", export_service.build_validation_frame(report))
    for check in report.checks:
        if not check.passed:
            run.say(f"FAILED {check.name}: {check.value:.6g} vs {check.expected:.6g} (tol {check.tolerance:.2g})")
    run.say(f"{sum(c.passed for c in report.checks)}/{len(report.checks)} oracle checks passed")
    run.result.exit_code = EXIT_OK if report.passed else EXIT_FAIL


def _compare(run: _Run) -> None:
    cfg = run.cfg
    fld = _field(cfg)
    pde = cfg.pde
    spec = pde.compare
    sim = SimConfig(
        dt=spec.mc_dt,
        target_external_time=pde.T,
        max_steps=cfg.sim.max_steps,
        overflow_cap=settings.OVERFLOW_CAP,
        block_steps=settings.BLOCK_STEPS,
    )
    comparison = validation_service.compare_mc_pde(
        fld,
        config_service.build_grid(pde),
        config_service.build_initial(pde),
        pde.T,
        spec.mc_paths,
        spec.tolerance,
        sim=sim,
        pde_dt=pde.dt,
        start_points=spec.start_points,
        base_seed=cfg.sim.seed,
        threads=cfg.threads,
    )
    run.write_csv("compare", export_service.build_comparison_frame(comparison))
    for p in comparison.points:
        oracle = f", oracle {p.oracle:.5f}" if p.oracle is not None else ""
        run.say(f"x={p.x:.4g}: mc {p.mc_mean:.5f} +/- {p.mc_stderr:.2g}, pde {p.pde:.5f}{oracle} -> {'ok' if p.passed else 'off'}")
    run.say(f"max discrepancy {comparison.max_discrepancy:.3e}")
    run.result.exit_code = EXIT_OK if comparison.passed else EXIT_FAIL


_HANDLERS = {
    "simulate": _simulate,
    "occupation": _occupation,
    "growth": _growth,
    "regime": _regime,
    "pde": _pde,
    "validate": _validate,
    "compare": _compare,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Execute ``cfg`` and write its artifacts; errors propagate to the caller."""
    run = _Run(
        cfg=cfg,
        cfg_hash=experiment_hash(cfg),
        out_dir=Path(cfg.output.directory),
        result=ExperimentResult(experiment=cfg.experiment, exit_code=EXIT_ERROR),
    )
    logger.info("running %s experiment '%s' (config %s)", cfg.experiment, cfg.label, run.cfg_hash[:12])
    _HANDLERS[cfg.experiment](run)
    logger.info("%s finished with exit code %d", cfg.label, run.result.exit_code)
    return run.result


# ---------------------------------------------------------------------------
# Background jobs
# ---------------------------------------------------------------------------

_JOBS: dict[uuid.UUID, ExperimentJobStatus] = {}
_JOBS_LOCK = threading.Lock()
_FINISHED = frozenset({"completed", "failed"})


def _update_job(job_id: uuid.UUID, **changes) -> None:
    with _JOBS_LOCK:
        _JOBS[job_id] = _JOBS[job_id].model_copy(update=changes)
        if _JOBS[job_id].status in _FINISHED:
            _evict_finished()


def _evict_finished() -> None:
    """Drop the oldest finished jobs past the cap; callers hold the lock."""
    finished = [job_id for job_id, job in _JOBS.items() if job.status in _FINISHED]
    for job_id in finished[: max(len(finished) - settings.MAX_FINISHED_JOBS, 0)]:
        del _JOBS[job_id]


def start_experiment_job(background_tasks: BackgroundTasks, cfg: ExperimentConfig) -> uuid.UUID:
    """Register a pending job and enqueue it; artifacts go under the service output directory."""
    job_id = uuid.uuid4()
    out_dir = Path(settings.SUBDIFF_OUTPUT_DIR) / str(job_id)
    cfg = config_service.apply_overrides(cfg, out=str(out_dir))
    with _JOBS_LOCK:
        _JOBS[job_id] = ExperimentJobStatus(job_id=job_id, experiment=cfg.experiment, status="pending")
    background_tasks.add_task(run_experiment_job, job_id=job_id, cfg=cfg)
    return job_id


async def run_experiment_job(job_id: uuid.UUID, cfg: ExperimentConfig) -> None:
    _update_job(job_id, status="running", started_at=datetime.now(timezone.utc))
    try:
        result = await asyncio.to_thread(run_experiment, cfg)
    except Exception as exc:  # noqa: BLE001
        logger.exception("experiment job %s failed", job_id)
        _update_job(
            job_id, status="failed", exit_code=EXIT_ERROR, message=str(exc), completed_at=datetime.now(timezone.utc)
        )
        return
    _update_job(
        job_id,
        status="completed",
        verdict=result.verdict,
        exit_code=result.exit_code,
        summary=result.summary,
        artifacts=[p.name for p in result.artifacts],
        completed_at=datetime.now(timezone.utc),
    )


def get_job_status(job_id: uuid.UUID) -> ExperimentJobStatus | None:
    with _JOBS_LOCK:
        return _JOBS.get(job_id)
