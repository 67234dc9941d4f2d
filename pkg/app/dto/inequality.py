from enum import StrEnum
import math

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TheoremId(StrEnum):
    CKN_COMPLEX = "ckn_complex"
    CKN_VECTOR = "ckn_vector"
    HPW = "hpw"
    SECOND_ORDER = "second_order"
    CKN_GENERAL = "ckn_general"
    SPHERE_COMPLEX = "sphere_complex"
    SPHERE_COMPLEX_STAR = "sphere_complex_star"
    SPHERE_COMPLEX_CENTERED = "sphere_complex_centered"
    SPHERE_COROLLARY = "sphere_corollary"
    SPHERE_VECTOR = "sphere_vector"
    SPHERE_VECTOR_ENERGY = "sphere_vector_energy"

    @property
    def on_sphere(self) -> bool:
        return self.value.startswith("sphere")


class CknParams(BaseModel):
    """Dimension and exponents of the improved CKN inequality."""

    model_config = ConfigDict(frozen=True)

    n: int
    p: float
    q: float

    @property
    def upper_dimension(self) -> float:
        return 2 * (self.p - self.q) / (self.p - 2)

    @model_validator(mode="after")
    def validate_window(self) -> "CknParams":
        if not self.p > 2:
            raise ValueError("constraint violated: p > 2")
        if not 0 < self.q < 2:
            raise ValueError("constraint violated: 0 < q < 2")
        if not 2 < self.n < self.upper_dimension:
            raise ValueError("constraint violated: 2 < n < 2(p - q)/(p - 2)")
        return self


class GeneralCknParams(BaseModel):
    """Parameters of the general-weight CKN inequality; gamma is derived when omitted."""

    n: int
    p: float
    r: float
    alpha: float
    beta: float
    gamma: float | None = None

    @property
    def expected_gamma(self) -> float:
        return (self.alpha - 1) / self.r + (self.p - 1) * self.beta / (self.p * self.r)

    @property
    def amplitude_exponent(self) -> float:
        """Power of |f| in the second left-hand factor, p(r - 1)/(p - 1)."""
        return self.p * (self.r - 1) / (self.p - 1)

    @model_validator(mode="after")
    def validate_constraints(self) -> "GeneralCknParams":
        if self.n < 2:
            raise ValueError("constraint violated: n >= 2")
        if not self.p > 2:
            raise ValueError("constraint violated: p > 2")
        if not self.r > self.p:
            raise ValueError("constraint violated: r > p")

        expected = self.expected_gamma
        if self.gamma is None:
            self.gamma = expected
        elif not math.isclose(self.gamma, expected, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("constraint violated: gamma = (alpha - 1)/r + (p - 1)beta/(p r)")

        if not 1 / self.p + self.alpha / self.n > 0:
            raise ValueError("constraint violated: 1/p + alpha/n > 0")
        if not (self.p - 1) / (self.p * (self.r - 1)) + self.beta / self.n > 0:
            raise ValueError("constraint violated: (p - 1)/(p(r - 1)) + beta/n > 0")
        if not 1 / self.r + self.gamma / self.n > 0:
            raise ValueError("constraint violated: 1/r + gamma/n > 0")
        return self


class QuadratureEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = Field(..., description="Integral or statistic the estimate belongs to")
    value: float
    error_estimate: float = Field(..., ge=0)
    flagged: bool = False


class InequalityReport(BaseModel):
    """Both sides of one inequality with every intermediate quantity."""

    model_config = ConfigDict(frozen=True)

    theorem_id: TheoremId
    n: int
    p: float | None = None
    q: float | None = None
    lhs: float
    rhs_classical: float
    cov_term: float = Field(..., ge=0, description="Contribution of the covariance term (its square or p-th power)")
    rhs_improved: float
    slack: float = Field(..., description="lhs - rhs_improved")
    relative_margin: float = Field(..., description="slack / lhs, 0 when lhs vanishes")
    holds: bool = Field(..., description="slack >= -tolerance")
    tolerance: float = Field(..., ge=0)
    ratio_classical: float | None = Field(default=None, description="lhs / rhs_classical")
    ratio_improved: float | None = Field(default=None, description="lhs / rhs_improved")
    quadrature_errors: list[QuadratureEntry] = Field(default_factory=list)
    identity_residual: float | None = Field(default=None, ge=0, description="Residual of the underlying identity")
    identity_error: float | None = Field(default=None, ge=0)
