from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    TypeAdapter,
    field_validator,
    model_validator,
)

from app.dto.expression import Expr, coordinates, parse_expression
from app.errors import FieldEvaluationError

type Codomain = Literal["real", "complex", "vector"]


class Point(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    coords: tuple[float, ...] = Field(..., min_length=1, max_length=7, description="Coordinates of the point")

    @property
    def dim(self) -> int:
        return len(self.coords)


class Domain(BaseModel):
    """Either R^n (``{"euclidean": n}``) or the ambient space R^{n+1} of S^n (``{"sphere": n}``)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    euclidean: int | None = Field(default=None, ge=1, le=6, description="Dimension n of R^n")
    sphere: int | None = Field(default=None, ge=1, le=5, description="Dimension n of S^n")

    @model_validator(mode="after")
    def validate_kind(self) -> "Domain":
        if (self.euclidean is None) == (self.sphere is None):
            raise ValueError("domain must name exactly one of 'euclidean' or 'sphere'")
        return self

    @property
    def kind(self) -> Literal["euclidean", "sphere"]:
        return "euclidean" if self.euclidean is not None else "sphere"

    @property
    def n(self) -> int:
        return self.euclidean if self.euclidean is not None else self.sphere  # type: ignore[return-value]

    @property
    def ambient_dim(self) -> int:
        return self.n if self.kind == "euclidean" else self.n + 1

    @property
    def first_coordinate(self) -> int:
        """Index of the first coordinate: x_1 on R^n, x_0 on the sphere ambient."""
        return 1 if self.kind == "euclidean" else 0


class FieldBase(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    domain: Domain | None = Field(default=None, description="Required on the outermost field")

    @property
    def codomain(self) -> Codomain:
        return "real"

    @property
    def width(self) -> int:
        """Number of real components carried through evaluation."""
        return 1

    def children(self) -> tuple["FieldBase", ...]:
        return ()

    def check_dims(self, domain: Domain) -> None:
        """Raise if the family parameters do not fit ``domain``."""
        for child in self.children():
            child.check_dims(domain)

    @model_validator(mode="after")
    def validate_domain(self) -> "FieldBase":
        if self.domain is None:
            return self

        for child in self.children():
            if child.domain is not None and child.domain != self.domain:
                raise ValueError(f"nested field domain {child.domain} differs from {self.domain}")
        try:
            self.check_dims(self.domain)
        except FieldEvaluationError as e:
            raise ValueError(str(e)) from e
        return self


def _check_length(name: str, values: tuple[float, ...] | None, domain: Domain) -> None:
    if values is not None and len(values) != domain.ambient_dim:
        raise FieldEvaluationError(
            f"{name} has {len(values)} entries but the domain has dimension {domain.ambient_dim}"
        )


class GaussianReal(FieldBase):
    """exp(-b |x - center|^2)"""

    family: Literal["gaussian"] = "gaussian"
    center: tuple[float, ...] | None = Field(default=None, description="Center (defaults to the origin)")
    b: float = Field(default=0.5, gt=0, description="Inverse width")

    def check_dims(self, domain: Domain) -> None:
        _check_length("center", self.center, domain)


class ChirpedGaussian(FieldBase):
    """exp(-b |x|^2) exp(i k.x)"""

    family: Literal["chirped_gaussian"] = "chirped_gaussian"
    k: tuple[float, ...] = Field(..., min_length=1, description="Wave vector")
    b: float = Field(default=0.5, gt=0, description="Inverse width")

    @property
    def codomain(self) -> Codomain:
        return "complex"

    @property
    def width(self) -> int:
        return 2

    def check_dims(self, domain: Domain) -> None:
        _check_length("k", self.k, domain)


class RadialPolyGaussian(FieldBase):
    """|x|^a exp(-b |x|^2)"""

    family: Literal["radial_poly_gaussian"] = "radial_poly_gaussian"
    a: float = Field(default=0.0, ge=0, description="Radial exponent")
    b: float = Field(default=1.0, gt=0, description="Decay")


class RadialRational(FieldBase):
    """(1 + b |x|^c)^(-a)"""

    family: Literal["radial_rational"] = "radial_rational"
    a: float = Field(default=1.0, gt=0, description="Outer exponent")
    b: float = Field(default=1.0, gt=0, description="Scale")
    c: float = Field(default=1.0, gt=0, description="Radial exponent")


class AffineHarmonic(FieldBase):
    """a + b x_j"""

    family: Literal["affine_harmonic"] = "affine_harmonic"
    a: float = 0.0
    b: float = 1.0
    j: int = Field(default=0, ge=0, description="Coordinate index (x_0..x_n on the sphere, x_1..x_n on R^n)")

    def check_dims(self, domain: Domain) -> None:
        last = domain.first_coordinate + domain.ambient_dim - 1
        if not domain.first_coordinate <= self.j <= last:
            raise FieldEvaluationError(f"coordinate index {self.j} outside {domain.first_coordinate}..{last}")


class Custom(FieldBase):
    family: Literal["custom"] = "custom"
    expr: str = Field(..., description="Prefix expression over add, mul, pow, exp, sin, cos, coord")

    _tree: Expr = PrivateAttr()

    @field_validator("expr")
    @classmethod
    def validate_expr(cls, value: str) -> str:
        parse_expression(value)
        return value

    def model_post_init(self, context: Any) -> None:
        self._tree = parse_expression(self.expr)

    @property
    def tree(self) -> Expr:
        return self._tree

    def check_dims(self, domain: Domain) -> None:
        last = domain.first_coordinate + domain.ambient_dim - 1
        for index in coordinates(parse_expression(self.expr)):
            if not domain.first_coordinate <= index <= last:
                raise FieldEvaluationError(f"coordinate index {index} outside {domain.first_coordinate}..{last}")


def _require_real(name: str, field: "FieldBase") -> None:
    if field.codomain != "real":
        raise ValueError(f"{name} must be a real field, got {field.codomain}")


class ComplexPair(FieldBase):
    """real + i imag"""

    family: Literal["complex"] = "complex"
    real: "FieldSpec"
    imag: "FieldSpec"

    @property
    def codomain(self) -> Codomain:
        return "complex"

    @property
    def width(self) -> int:
        return 2

    def children(self) -> tuple[FieldBase, ...]:
        return (self.real, self.imag)

    @model_validator(mode="after")
    def validate_parts(self) -> "ComplexPair":
        _require_real("real", self.real)
        _require_real("imag", self.imag)
        return self


class Polar(FieldBase):
    """amplitude * exp(i phase)"""

    family: Literal["polar"] = "polar"
    amplitude: "FieldSpec"
    phase: "FieldSpec"

    @property
    def codomain(self) -> Codomain:
        return "complex"

    @property
    def width(self) -> int:
        return 2

    def children(self) -> tuple[FieldBase, ...]:
        return (self.amplitude, self.phase)

    @model_validator(mode="after")
    def validate_parts(self) -> "Polar":
        _require_real("amplitude", self.amplitude)
        _require_real("phase", self.phase)
        return self


class VectorOfFields(FieldBase):
    family: Literal["vector"] = "vector"
    components: tuple["FieldSpec", ...] = Field(..., min_length=2, description="Real component fields")

    @property
    def codomain(self) -> Codomain:
        return "vector"

    @property
    def width(self) -> int:
        return len(self.components)

    def children(self) -> tuple[FieldBase, ...]:
        return tuple(self.components)

    @model_validator(mode="after")
    def validate_components(self) -> "VectorOfFields":
        for i, component in enumerate(self.components):
            _require_real(f"components[{i}]", component)
        return self


class Dilation(FieldBase):
    """field(lam * x)"""

    family: Literal["dilation"] = "dilation"
    field: "FieldSpec"
    lam: float = Field(..., gt=0, description="Dilation factor")

    @property
    def codomain(self) -> Codomain:
        return self.field.codomain

    @property
    def width(self) -> int:
        return self.field.width

    def children(self) -> tuple[FieldBase, ...]:
        return (self.field,)


class HomogeneousExtension(FieldBase):
    """field(x / |x|): the degree-0 extension of a sphere field to R^{n+1} minus the origin."""

    family: Literal["homogeneous"] = "homogeneous"
    field: "FieldSpec"

    @property
    def codomain(self) -> Codomain:
        return self.field.codomain

    @property
    def width(self) -> int:
        return self.field.width

    def children(self) -> tuple[FieldBase, ...]:
        return (self.field,)

    def check_dims(self, domain: Domain) -> None:
        if domain.kind != "sphere":
            raise FieldEvaluationError("homogeneous extension needs a sphere domain")
        super().check_dims(domain)


FieldSpec = Annotated[
    GaussianReal
    | ChirpedGaussian
    | RadialPolyGaussian
    | RadialRational
    | AffineHarmonic
    | Custom
    | ComplexPair
    | Polar
    | VectorOfFields
    | Dilation
    | HomogeneousExtension,
    Field(discriminator="family"),
]

for _model in (ComplexPair, Polar, VectorOfFields, Dilation, HomogeneousExtension):
    _model.model_rebuild()

field_adapter: TypeAdapter[FieldSpec] = TypeAdapter(FieldSpec)


def parse_field(data: str | bytes | dict[str, Any]) -> FieldSpec:
    """Validate a FieldSpec from JSON text or a decoded object; the outermost field must declare its domain."""
    field = field_adapter.validate_json(data) if isinstance(data, str | bytes) else field_adapter.validate_python(data)
    if field.domain is None:
        raise FieldEvaluationError("the outermost field must declare a domain")
    return field
