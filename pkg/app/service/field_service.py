from dataclasses import dataclass
from pathlib import Path

import aiofiles
import numpy as np

from app.dto.expression import Apply, Coord, Expr, Number
from app.dto.field import (
    AffineHarmonic,
    ChirpedGaussian,
    ComplexPair,
    Custom,
    Dilation,
    Domain,
    FieldSpec,
    GaussianReal,
    HomogeneousExtension,
    Point,
    Polar,
    RadialPolyGaussian,
    RadialRational,
    VectorOfFields,
    parse_field,
)
from app.errors import FieldEvaluationError
from app.jet import Jet


@dataclass(frozen=True)
class PointJet:
    """Value, gradient and optional Hessian of every component at one point.

    Complex fields are returned as complex arrays (u + iv); real and vector fields as real arrays.
    """

    value: np.ndarray  # (m,)
    grad: np.ndarray  # (m, d)
    hess: np.ndarray | None = None  # (m, d, d)


@dataclass(frozen=True)
class FieldSample:
    """Batched jets of the real components (complex fields as the pair u, v)."""

    codomain: str
    values: np.ndarray  # (N, m)
    grads: np.ndarray  # (N, m, d)
    hessians: np.ndarray | None = None  # (N, m, d, d)

    @classmethod
    def from_jets(cls, codomain: str, jets: list[Jet]) -> "FieldSample":
        values = np.stack([jet.value for jet in jets], axis=1)
        grads = np.stack([np.asarray(jet.grad) for jet in jets], axis=1)
        hessians = None if jets[0].hess is None else np.stack([jet.hess for jet in jets], axis=1)
        return cls(codomain=codomain, values=values, grads=grads, hessians=hessians)

    @property
    def amplitude_sq(self) -> np.ndarray:
        return np.sum(self.values * self.values, axis=1)

    @property
    def grad_sq(self) -> np.ndarray:
        return np.sum(self.grads * self.grads, axis=(1, 2))

    def point_jet(self, index: int = 0) -> PointJet:
        value, grad = self.values[index], self.grads[index]
        hess = None if self.hessians is None else self.hessians[index]
        if self.codomain == "complex":
            return PointJet(
                value=np.array([value[0] + 1j * value[1]]),
                grad=(grad[0] + 1j * grad[1])[None, :],
                hess=None if hess is None else (hess[0] + 1j * hess[1])[None, :, :],
            )
        return PointJet(value=value.copy(), grad=grad.copy(), hess=None if hess is None else hess.copy())

    def gradient_field(self) -> "FieldSample":
        """Sample of the vector field grad u built from a second-order sample of a real u."""
        if self.hessians is None or self.values.shape[1] != 1:
            raise FieldEvaluationError("gradient field needs a second-order sample of a real scalar field")
        return FieldSample(codomain="vector", values=self.grads[:, 0, :], grads=self.hessians[:, 0, :, :])


def _radius_sq(x: list[Jet]) -> Jet:
    total = x[0] * x[0]
    for xi in x[1:]:
        total = total + xi * xi
    return total


def _as_jet(value: "Jet | float", like: Jet) -> Jet:
    return value if isinstance(value, Jet) else Jet.constant(value, like)


class FieldService:
    """Evaluates parametric fields through forward-mode jets."""

    async def load_field(self, path: Path) -> FieldSpec:
        """Read a FieldSpec JSON file."""
        if not path.exists():
            raise FileNotFoundError(f"Field file not found at {path}")

        async with aiofiles.open(path) as f:
            content = await f.read()
        return parse_field(content)

    def restrict_to_sphere(self, field: FieldSpec) -> HomogeneousExtension:
        """Degree-0 homogeneous extension F(x) = f(x / |x|) of a sphere field."""
        domain = field.domain
        if domain is None or domain.kind != "sphere":
            raise FieldEvaluationError("restrict_to_sphere needs a field on a sphere domain")
        if isinstance(field, HomogeneousExtension):
            return field
        return HomogeneousExtension(field=field.model_copy(update={"domain": None}), domain=domain)

    def sample(self, field: FieldSpec, points: np.ndarray, order: int = 1) -> FieldSample:
        """Evaluate every component with derivatives at each row of ``points``."""
        domain = field.domain
        if domain is None:
            raise FieldEvaluationError("the outermost field must declare a domain")

        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != domain.ambient_dim:
            raise FieldEvaluationError(
                f"points have dimension {points.shape[1]} but the field domain has dimension {domain.ambient_dim}"
            )

        with np.errstate(all="ignore"):
            coordinates = Jet.variables(points, order)
            jets = [_as_jet(jet, coordinates[0]) for jet in self._components(field, coordinates, domain)]

        finite = np.logical_and.reduce([jet.is_finite() for jet in jets])
        if not finite.all():
            row = int(np.argmin(finite))
            coords = ", ".join(f"{c:.17g}" for c in points[row])
            raise FieldEvaluationError(f"non-finite field value or derivative at x = ({coords})")

        return FieldSample.from_jets(field.codomain, jets)

    def eval_jet1(self, field: FieldSpec, x: Point) -> PointJet:
        return self.sample(field, np.array([x.coords]), order=1).point_jet()

    def eval_jet2(self, field: FieldSpec, x: Point) -> PointJet:
        return self.sample(field, np.array([x.coords]), order=2).point_jet()

    def _components(self, field: FieldSpec, x: list[Jet], domain: Domain) -> list["Jet | float"]:
        match field:
            case GaussianReal(center=center, b=b):
                shifted = x if center is None else [xi - ci for xi, ci in zip(x, center, strict=True)]
                return [(_radius_sq(shifted) * -b).exp()]

            case ChirpedGaussian(k=k, b=b):
                envelope = (_radius_sq(x) * -b).exp()
                phase = sum((xi * ki for xi, ki in zip(x, k, strict=True)), start=x[0] * 0.0)
                return [envelope * phase.cos(), envelope * phase.sin()]

            case RadialPolyGaussian(a=a, b=b):
                r2 = _radius_sq(x)
                envelope = (r2 * -b).exp()
                return [envelope if a == 0 else r2 ** (a / 2) * envelope]

            case RadialRational(a=a, b=b, c=c):
                return [(1.0 + b * _radius_sq(x) ** (c / 2)) ** -a]

            case AffineHarmonic(a=a, b=b, j=j):
                return [a + b * x[j - domain.first_coordinate]]

            case Custom():
                return [self._evaluate_expression(field.tree, x, domain.first_coordinate)]

            case ComplexPair(real=real, imag=imag):
                return [*self._components(real, x, domain), *self._components(imag, x, domain)]

            case Polar(amplitude=amplitude, phase=phase):
                rho = _as_jet(self._components(amplitude, x, domain)[0], x[0])
                phi = _as_jet(self._components(phase, x, domain)[0], x[0])
                return [rho * phi.cos(), rho * phi.sin()]

            case VectorOfFields(components=components):
                return [value for component in components for value in self._components(component, x, domain)]

            case Dilation(field=inner, lam=lam):
                return self._components(inner, [xi * lam for xi in x], domain)

            case HomogeneousExtension(field=inner):
                r2 = _radius_sq(x)
                if np.any(r2.value == 0.0):
                    raise FieldEvaluationError("homogeneous extension is undefined at the origin")
                inverse_norm = r2**-0.5
                return self._components(inner, [xi * inverse_norm for xi in x], domain)

            case _:
                raise FieldEvaluationError(f"unsupported field family {field.family!r}")

    def _evaluate_expression(self, expr: Expr, x: list[Jet], first: int) -> "Jet | float":
        match expr:
            case Number(value=value):
                return np.float64(value)
            case Coord(index=index):
                return x[index - first]
            case Apply(op="add", args=args):
                terms = [self._evaluate_expression(arg, x, first) for arg in args]
                total = terms[0]
                for term in terms[1:]:
                    total = total + term
                return total
            case Apply(op="mul", args=args):
                factors = [self._evaluate_expression(arg, x, first) for arg in args]
                product = factors[0]
                for factor in factors[1:]:
                    product = product * factor
                return product
            case Apply(op="pow", args=(base, Number(value=exponent))):
                value = self._evaluate_expression(base, x, first)
                return value**exponent if isinstance(value, Jet) else np.power(value, exponent)
            case Apply(op=op, args=(arg,)):
                value = self._evaluate_expression(arg, x, first)
                if isinstance(value, Jet):
                    return getattr(value, op)()
                # constant subtrees overflow to inf/nan under the caller's errstate
                return getattr(np, op)(value)
            case _:
                raise FieldEvaluationError(f"cannot evaluate expression node {expr!r}")
