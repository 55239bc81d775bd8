"""
Config service: load experiment YAML files and build engine objects from them.
"""
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path

from pydantic import ValidationError
from ruamel.yaml import YAML
from ruamel.yaml.error import MarkedYAMLError, YAMLError

from app.config import settings
from app.core.alpha_field import (
    AlphaField,
    PiecewiseConstantField,
    PowerLawField,
    TabulatedField,
    constant_field,
    plateau_field,
    two_level_field,
    vee_field,
)
from app.core.errors import ConfigError, DomainError
from app.core.initial_conditions import InitialCondition, initial_condition
from app.core.intervals import IntervalUnion, PointSet, PowerLawIntervals
from app.core.pde_solver import Boundary, Grid1D
from app.core.simulator import ClockKind, SimConfig
from app.schemas.experiment import ExperimentConfig, PdeSpec

logger = logging.getLogger(__name__)


def _locate(data, loc: Sequence) -> tuple[str, int | None]:
    """Dotted key path and 1-based source line for a pydantic error location."""
    node, keys, line = data, [], None
    for i, part in enumerate(loc):
        if isinstance(node, Mapping) and part in node:
            if hasattr(node, "lc"):
                line = node.lc.key(part)[0] + 1
            keys.append(str(part))
            node = node[part]
        elif isinstance(node, list) and isinstance(part, int) and 0 <= part < len(node):
            if hasattr(node, "lc"):
                line = node.lc.item(part)[0] + 1
            keys.append(str(part))
            node = node[part]
        elif i == len(loc) - 1 and isinstance(part, str):
            # missing key: report it at its parent mapping
            keys.append(part)
            if hasattr(node, "lc"):
                line = node.lc.line + 1
        # anything else is a union tag that does not appear in the file
    return ".".join(keys), line


def parse_config(data, source: str = "<config>") -> ExperimentConfig:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        errors = e.errors()
        # a misspelt key also shows up as a missing field; name the typo
        err = next((x for x in errors if x["type"] == "extra_forbidden"), errors[0])
        key, line = _locate(data, err["loc"])
        if err["type"] == "extra_forbidden":
            message = f"{source}: unknown key '{key.rsplit('.', 1)[-1]}'"
        else:
            message = f"{source}: {err['msg']}"
        raise ConfigError(message, key=key or None, line=line) from e


def load_config(path: Path) -> ExperimentConfig:
    """Read and validate an experiment file; every failure is a ConfigError."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    yaml = YAML()  # round-trip loader keeps line numbers
    try:
        with path.open(encoding="utf-8") as fh:
            data = yaml.load(fh)
    except MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ConfigError(f"{path}: {e.problem}", line=line) from e
    except YAMLError as e:
        raise ConfigError(f"{path}: {e}") from e
    cfg = parse_config(data, str(path))
    logger.debug("loaded %s experiment from %s", cfg.experiment, path)
    return cfg


def apply_overrides(
    cfg: ExperimentConfig,
    *,
    seed: int | None = None,
    threads: int | None = None,
    out: str | None = None,
) -> ExperimentConfig:
    update = {}
    if seed is not None:
        update["sim"] = cfg.sim.model_copy(update={"seed": seed})
    if threads is not None:
        update["threads"] = threads
    if out is not None:
        update["output"] = cfg.output.model_copy(update={"directory": out})
    return cfg.model_copy(update=update) if update else cfg


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_field(spec) -> AlphaField:
    bounds = {"alpha_floor": spec.alpha_floor, "alpha_ceiling": spec.alpha_ceiling}
    try:
        if spec.kind == "constant":
            return constant_field(spec.alpha, **bounds)
        if spec.kind == "two_level":
            return two_level_field(spec.alpha_in, spec.alpha_out, spec.lo, spec.hi, **bounds)
        if spec.kind == "piecewise":
            return PiecewiseConstantField(
                breakpoints=tuple(spec.breakpoints), values=tuple(spec.values),
                tail_left=spec.tail_left, tail_right=spec.tail_right, **bounds,
            )
        if spec.kind == "plateau":
            return plateau_field(spec.alpha_min, spec.alpha_left, spec.alpha_right, spec.lo, spec.hi, spec.ramp, **bounds)
        if spec.kind == "vee":
            return vee_field(spec.base, spec.slope, spec.width, spec.center, **bounds)
        if spec.kind == "tabulated":
            return TabulatedField(
                grid=tuple(spec.grid), table=tuple(spec.table), declared_alpha_star=spec.alpha_star,
                argmin=IntervalUnion.from_pairs(spec.argmin), tail_left=spec.tail_left,
                tail_right=spec.tail_right, interpolation=spec.interpolation,
                jump_at_minimum=spec.jump_at_minimum, **bounds,
            )
        trap = PowerLawIntervals(
            width=spec.width, c_right=spec.c_right, a_right=spec.a_right, c_left=spec.c_left, a_left=spec.a_left,
            shift=spec.shift,
        )
        return PowerLawField(spec.alpha_min, spec.alpha_right, spec.alpha_left, trap, **bounds)
    except DomainError as e:
        raise ConfigError(f"invalid field: {e}", key="field") from e


def build_sim_config(cfg: ExperimentConfig) -> SimConfig:
    sim = cfg.sim
    return SimConfig(
        dt=sim.dt,
        x0=sim.x0,
        target_external_time=sim.t_final,
        max_steps=sim.max_steps,
        overflow_cap=settings.OVERFLOW_CAP,
        clock=ClockKind(sim.clock),
        block_steps=settings.BLOCK_STEPS,
    )


def resolve_target(field: AlphaField, cfg: ExperimentConfig) -> PointSet:
    sim = cfg.sim
    if sim.interval is not None:
        return IntervalUnion.from_pairs([sim.interval])
    if sim.target == "real_line":
        return IntervalUnion.real_line()
    try:
        structure = field.min_structure()
    except DomainError as e:
        raise ConfigError(f"target '{sim.target}' is undefined for this field ({e}); set sim.interval", key="sim.target") from e
    if sim.target == "neighbourhood":
        return structure.neighbourhood
    if sim.target == "escape":
        if structure.escape_set is None:
            raise ConfigError("field has no escape set", key="sim.target")
        return structure.escape_set
    return structure.argmin_set


def build_grid(pde: PdeSpec) -> Grid1D:
    try:
        return Grid1D(pde.x_min, pde.x_max, pde.n_x, Boundary(pde.boundary))
    except DomainError as e:
        raise ConfigError(f"invalid grid: {e}", key="pde") from e


def build_initial(pde: PdeSpec) -> InitialCondition:
    try:
        return initial_condition(pde.initial.name, **pde.initial.params)
    except DomainError as e:
        raise ConfigError(str(e), key="pde.initial.params") from e
