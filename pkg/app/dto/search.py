from enum import StrEnum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.dto.field import FieldSpec, parse_field
from app.dto.inequality import CknParams, GeneralCknParams, TheoremId
from app.dto.quadrature import QuadratureBudget
from app.utils import get_path, set_path

SWEEP_HEADER = (
    "theorem_id",
    "n",
    "p",
    "q",
    "lhs",
    "rhs_classical",
    "cov_term",
    "slack",
    "relative_margin",
    "holds",
    "skipped_reason",
)


class Objective(StrEnum):
    RATIO_CLASSICAL = "ratio_classical"
    RATIO_IMPROVED = "ratio_improved"


class StopReason(StrEnum):
    DIAMETER = "diameter"
    SPREAD = "spread"
    ITERATIONS = "iterations"
    FAILURES = "failures"


class FreeParameter(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    path: str = Field(..., min_length=1, description="Dotted path into the field template, e.g. 'field.lam'")
    lower: float
    upper: float

    @model_validator(mode="after")
    def validate_bounds(self) -> "FreeParameter":
        if not self.lower < self.upper:
            raise ValueError(f"bounds of {self.path!r} must satisfy lower < upper")
        return self

    @property
    def span(self) -> float:
        return self.upper - self.lower


class SearchProblem(BaseModel):
    """Minimize lhs / rhs of one inequality over a field template with free real parameters."""

    model_config = ConfigDict(frozen=True)

    theorem_id: TheoremId
    params: CknParams | None = None
    general_params: GeneralCknParams | None = None
    n: int | None = None
    family: dict[str, Any] = Field(..., description="FieldSpec JSON template")
    free_parameters: list[FreeParameter] = Field(..., min_length=1)
    objective: Objective = Objective.RATIO_CLASSICAL
    budget: QuadratureBudget = Field(default_factory=QuadratureBudget)
    seed: int = Field(default=42, ge=0, lt=2**64)
    restarts: int = Field(default=3, ge=1, le=16)
    max_iterations: int = Field(default=200, ge=1)
    initial_step: float = Field(default=0.1, gt=0, le=1, description="Initial simplex edge as a fraction of each range")

    @model_validator(mode="after")
    def validate_template(self) -> "SearchProblem":
        if self.theorem_id.on_sphere:
            raise ValueError("searches run over Euclidean inequalities only")
        for parameter in self.free_parameters:
            try:
                get_path(self.family, parameter.path)
            except (KeyError, IndexError, ValueError, TypeError) as e:
                raise ValueError(f"free parameter path {parameter.path!r} not found in the family") from e
        self.field_at(self.midpoint)
        return self

    @property
    def midpoint(self) -> list[float]:
        return [(parameter.lower + parameter.upper) / 2 for parameter in self.free_parameters]

    def field_at(self, theta: list[float]) -> FieldSpec:
        """Instantiate the template at parameter values ``theta``."""
        data = self.family
        for parameter, value in zip(self.free_parameters, theta, strict=True):
            data = set_path(data, parameter.path, float(value))
        return parse_field(data)


class TraceEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    restart: int
    iteration: int
    theta: list[float]
    ratio: float


class RestartResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int
    best_theta: list[float]
    best_ratio: float
    iterations: int
    evaluations: int
    stop_reason: StopReason


class SearchResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    parameters: list[str] = Field(..., description="Free parameter paths, in theta order")
    best_theta: list[float]
    best_ratio: float
    min_evaluated_ratio: float = Field(..., description="Smallest objective seen at any evaluation")
    evaluations: int
    stop_reason: StopReason = Field(..., description="Stop reason of the restart that found the best point")
    restarts: list[RestartResult]
    trace: list[TraceEntry] = Field(default_factory=list, description="Best vertex after every iteration")


class GridScanResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    points_per_axis: int
    best_theta: list[float]
    best_ratio: float
    evaluations: int
    failures: int


class ParamGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: list[int] = Field(default_factory=list)
    p: list[float] = Field(default_factory=list)
    q: list[float] = Field(default_factory=list)


class SweepRow(BaseModel):
    """One sweep cell; inadmissible cells carry the violated constraint instead of numbers."""

    model_config = ConfigDict(frozen=True)

    theorem_id: TheoremId
    n: int
    p: float
    q: float
    lhs: float | None = None
    rhs_classical: float | None = None
    cov_term: float | None = None
    slack: float | None = None
    relative_margin: float | None = None
    holds: bool | None = None
    skipped_reason: str | None = None
