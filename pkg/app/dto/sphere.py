import math

from pydantic import BaseModel, ConfigDict, Field, model_validator

TANGENCY_TOLERANCE = 1e-12


class TangentVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    base: tuple[float, ...] = Field(..., description="Point on S^n")
    components: tuple[float, ...] = Field(..., description="Real part of the spherical gradient")
    components_imag: tuple[float, ...] | None = Field(default=None, description="Imaginary part (complex fields)")

    @model_validator(mode="after")
    def validate_tangency(self) -> "TangentVector":
        parts = [self.components] if self.components_imag is None else [self.components, self.components_imag]
        for part in parts:
            if len(part) != len(self.base):
                raise ValueError("tangent vector and base point differ in dimension")
            scale = max(1.0, math.hypot(*part))
            if abs(math.fsum(b * c for b, c in zip(self.base, part, strict=True))) > TANGENCY_TOLERANCE * scale:
                raise ValueError("vector is not tangent to the sphere at its base point")
        return self


class IdentityResidual(BaseModel):
    model_config = ConfigDict(frozen=True)

    residual: float = Field(..., ge=0, description="|LHS - RHS|")
    error_estimate: float = Field(..., ge=0, description="Combined quadrature error of both sides")
    lhs: float
    rhs: float


class SphereStats(BaseModel):
    """Spherical statistics of a unit-energy field on S^n."""

    model_config = ConfigDict(frozen=True)

    n: int
    codomain: str
    tau: list[float] = Field(..., description="Mean of x under |f|^2 d sigma")
    var_x: float
    a_real: list[float] = Field(..., description="Re a(f); for vector fields a(f) itself")
    a_star: list[float] | None = Field(default=None, description="a*(f) = Im a(f), complex fields only")
    var_freq: float = Field(..., ge=0)
    var_freq_star: float | None = Field(default=None, ge=0)
    cov: float = Field(..., ge=0)
    cov_star: float | None = Field(default=None, ge=0)
    energy: float
    grad_energy: float = Field(..., ge=0, description="Integral of |grad_S f|^2")
    renormalization: float = Field(..., gt=0, description="Factor applied to reach unit energy")
    errors: dict[str, float] = Field(default_factory=dict, description="Quadrature error estimate per quantity")

    @property
    def tau_norm_sq(self) -> float:
        return math.fsum(t * t for t in self.tau)


class DecompositionResiduals(BaseModel):
    model_config = ConfigDict(frozen=True)

    res1: float = Field(..., ge=0, description="V against amplitude part plus phase part")
    res1_error: float = Field(..., ge=0)
    res2: float | None = Field(default=None, ge=0, description="V* decomposition, complex fields only")
    res2_error: float | None = Field(default=None, ge=0)
