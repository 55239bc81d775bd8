import uuid
from datetime import datetime
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

ExperimentKind = Literal["simulate", "occupation", "growth", "regime", "pde", "validate", "compare"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ── alpha field blocks ──────────────────────────────────────────────────────


class _Bounds(StrictModel):
    alpha_floor: float = Field(default=0.05, gt=0, lt=1)
    alpha_ceiling: float = Field(default=0.95, gt=0, lt=1)


class ConstantFieldSpec(_Bounds):
    kind: Literal["constant"]
    alpha: float


class TwoLevelFieldSpec(_Bounds):
    kind: Literal["two_level"]
    alpha_in: float
    alpha_out: float
    lo: float = 0.0
    hi: float = 1.0


class PiecewiseFieldSpec(_Bounds):
    kind: Literal["piecewise"]
    breakpoints: list[float] = Field(min_length=1)
    values: list[float]
    tail_left: float
    tail_right: float


class PlateauFieldSpec(_Bounds):
    kind: Literal["plateau"]
    alpha_min: float
    alpha_left: float
    alpha_right: float
    lo: float
    hi: float
    ramp: float = Field(gt=0)


class VeeFieldSpec(_Bounds):
    kind: Literal["vee"]
    base: float
    slope: float = Field(gt=0)
    width: float = Field(gt=0)
    center: float = 0.0


class TabulatedFieldSpec(_Bounds):
    kind: Literal["tabulated"]
    grid: list[float] = Field(min_length=2)
    table: list[float] = Field(min_length=2)
    alpha_star: float
    argmin: list[tuple[float, float]]
    tail_left: float
    tail_right: float
    interpolation: Literal["linear", "previous"] = "linear"
    jump_at_minimum: bool = False


class PowerLawFieldSpec(_Bounds):
    kind: Literal["power_law"]
    alpha_min: float
    alpha_right: float
    alpha_left: float
    width: float = Field(default=1.0, gt=0)
    c_right: float = Field(ge=0, lt=1)
    a_right: float = Field(gt=0)
    c_left: float = Field(default=0.0, ge=0, lt=1)
    a_left: float = Field(default=1.0, gt=0)
    shift: float = 0.0


FieldSpec = Annotated[
    Union[
        ConstantFieldSpec,
        TwoLevelFieldSpec,
        PiecewiseFieldSpec,
        PlateauFieldSpec,
        VeeFieldSpec,
        TabulatedFieldSpec,
        PowerLawFieldSpec,
    ],
    Field(discriminator="kind"),
]


# ── simulation block ────────────────────────────────────────────────────────


class GrowthSpec(StrictModel):
    t_min: float = Field(default=1e2, gt=0)       # internal time
    t_max: float = Field(default=1e4, gt=0)
    n_points: int = Field(default=50, ge=2)
    quantities: list[Literal["H_t", "sigma1_of_H", "sigma2_of_rest", "sigma"]] = ["H_t", "sigma1_of_H"]
    robust: bool = False


class RegimeSpec(StrictModel):
    decades: int = Field(default=3, ge=1)
    n_points: int = Field(default=200, ge=10)
    high: float = Field(default=0.8, gt=0, lt=1)
    low: float = Field(default=0.2, gt=0, lt=1)
    max_halfwidth: float = Field(default=0.1, gt=0)


class SimSpec(StrictModel):
    dt: float = Field(default=0.01, gt=0)
    x0: float = 0.0
    t_final: float = Field(default=1.0, gt=0)       # external target time
    max_steps: int = Field(default=10_000_000, ge=1)
    n_paths: int = Field(default=200, ge=1)
    seed: int = Field(default=0, ge=0)
    k_radius: float = Field(default=10.0, gt=0)
    clock: Literal["stable", "drift"] = "stable"
    target: Literal["argmin", "neighbourhood", "escape", "real_line"] = "argmin"
    interval: tuple[float, float] | None = None     # overrides ``target``
    occupation: Literal["exact", "quadrature"] = "exact"
    n_times: int = Field(default=50, ge=2)
    growth: GrowthSpec = GrowthSpec()
    regime: RegimeSpec = RegimeSpec()


# ── pde block ───────────────────────────────────────────────────────────────


class InitialSpec(StrictModel):
    name: Literal["constant", "cos", "bump", "gaussian"] = "cos"
    params: dict[str, float] = {}


class CompareSpec(StrictModel):
    start_points: list[float] | None = None
    mc_paths: int = Field(default=1000, ge=1)
    mc_dt: float = Field(default=1e-3, gt=0)
    tolerance: float = Field(default=0.02, gt=0)


class PdeSpec(StrictModel):
    x_min: float
    x_max: float
    n_x: int = Field(default=128, ge=3)
    boundary: Literal["periodic", "dirichlet0", "neumann0"] = "periodic"
    T: float = Field(default=1.0, gt=0)
    dt: float = Field(default=0.01, gt=0)
    initial: InitialSpec = InitialSpec()
    compare: CompareSpec = CompareSpec()


# ── output block ────────────────────────────────────────────────────────────


class OutputSpec(StrictModel):
    directory: str = "results"
    formats: list[Literal["csv", "dump"]] = ["csv"]
    solution_every: int = Field(default=1, ge=1)


class ExperimentConfig(StrictModel):
    experiment: ExperimentKind
    name: str | None = None
    field: FieldSpec | None = None
    sim: SimSpec = SimSpec()
    pde: PdeSpec | None = None
    output: OutputSpec = OutputSpec()
    threads: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _blocks_present(self):
        if self.experiment != "validate" and self.field is None:
            raise ValueError(f"experiment '{self.experiment}' needs a field block")
        if self.experiment in ("pde", "compare") and self.pde is None:
            raise ValueError(f"experiment '{self.experiment}' needs a pde block")
        return self

    @property
    def label(self) -> str:
        return self.name or self.experiment


# ── background jobs ─────────────────────────────────────────────────────────


class ExperimentJobStatus(BaseModel):
    job_id: uuid.UUID
    experiment: str
    status: str          # pending | running | completed | failed
    verdict: str | None = None
    exit_code: int | None = None
    summary: list[str] = []
    artifacts: list[str] = []
    message: str | None = None
    started_at: datetime | None = None
    completed_at: datetime | None = None
