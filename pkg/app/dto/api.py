from pydantic import BaseModel, Field, field_validator

from app.dto.field import FieldSpec
from app.dto.inequality import CknParams, GeneralCknParams, InequalityReport, TheoremId
from app.dto.quadrature import QuadratureBudget
from app.dto.search import ParamGrid


def _require_domain(field: FieldSpec) -> FieldSpec:
    if field.domain is None:
        raise ValueError("the outermost field must declare a domain")
    return field


class VerifyRequest(BaseModel):
    theorem_id: TheoremId = Field(..., description="Inequality to check")
    params: CknParams | None = Field(default=None, description="n, p, q for the CKN-type checks")
    general_params: GeneralCknParams | None = Field(default=None, description="Parameters of ckn_general")
    n: int | None = Field(default=None, ge=1, description="Dimension; defaults to the field's domain")
    field: FieldSpec
    budget: QuadratureBudget | None = None

    @field_validator("field")
    @classmethod
    def validate_field(cls, value: FieldSpec) -> FieldSpec:
        return _require_domain(value)


class VerifyResponse(BaseModel):
    reports: list[InequalityReport] = Field(..., description="One report per checked form")


class StatsRequest(BaseModel):
    field: FieldSpec
    n: int = Field(..., ge=1, le=5, description="Sphere dimension")
    budget: QuadratureBudget | None = None

    @field_validator("field")
    @classmethod
    def validate_field(cls, value: FieldSpec) -> FieldSpec:
        return _require_domain(value)


class SweepRequest(BaseModel):
    theorem_id: TheoremId
    grid: ParamGrid
    field: FieldSpec
    budget: QuadratureBudget | None = None

    @field_validator("field")
    @classmethod
    def validate_field(cls, value: FieldSpec) -> FieldSpec:
        return _require_domain(value)
