from enum import Enum

from pydantic import BaseModel, Field


class Verdict(str, Enum):
    CONSISTENT = "Consistent"
    INCONSISTENT = "Inconsistent"
    INCONCLUSIVE = "Inconclusive"


class EnsembleSummary(BaseModel):
    n_paths: int = Field(ge=1)
    n_incomplete: int = 0
    t_grid: list[float]
    occ_mean: list[float]
    occ_ci_halfwidth: list[float]
    hit_prob: list[float]
    hit_ci_halfwidth: list[float]
    extra_hit_prob: dict[str, list[float]] = {}
    occupation_method: str = "exact"  # exact | quadrature

    def occ_ci(self) -> tuple[list[float], list[float]]:
        """95% interval clipped to [0, 1]."""
        lo = [min(max(m - h, 0.0), 1.0) for m, h in zip(self.occ_mean, self.occ_ci_halfwidth)]
        hi = [min(max(m + h, 0.0), 1.0) for m, h in zip(self.occ_mean, self.occ_ci_halfwidth)]
        return lo, hi

    def hit_ci(self) -> tuple[list[float], list[float]]:
        lo = [min(max(p - h, 0.0), 1.0) for p, h in zip(self.hit_prob, self.hit_ci_halfwidth)]
        hi = [min(max(p + h, 0.0), 1.0) for p, h in zip(self.hit_prob, self.hit_ci_halfwidth)]
        return lo, hi


class SlopeFit(BaseModel):
    quantity: str
    log_t: list[float]
    log_q: list[float]
    slope: float
    slope_stderr: float = Field(ge=0)
    intercept: float = 0.0
    n_paths_used: int = 0
    robust: bool = False
    nominal: float | None = None   # exponent predicted for the field, when known


class PredictionSummary(BaseModel):
    kind: str            # LocalizeOccupation | LocalizeProbability | Delocalize | Critical
    condition_lhs: float
    condition_rhs: float
    target: str


class RegimeReport(BaseModel):
    prediction: PredictionSummary
    occ_final: float
    hit_final: float
    occ_ci_final: float
    hit_ci_final: float
    escape_hit_final: float | None = None
    trend: str           # increasing | decreasing | none
    decade_times: list[float]
    decade_occ: list[float]
    verdict: Verdict
    summary: EnsembleSummary


class ComparisonPoint(BaseModel):
    x: float
    mc_mean: float
    mc_stderr: float
    pde: float
    oracle: float | None = None
    discrepancy: float
    allowed: float
    passed: bool


class McPdeComparison(BaseModel):
    T: float
    n_paths: int
    points: list[ComparisonPoint]
    max_discrepancy: float
    passed: bool


class ValidationCheck(BaseModel):
    name: str
    value: float
    expected: float
    tolerance: float
    passed: bool
    detail: str = ""


class ValidationReport(BaseModel):
    checks: list[ValidationCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)
