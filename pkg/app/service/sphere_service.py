import math

import numpy as np

from app.config import config
from app.dto.field import FieldSpec, Point
from app.dto.quadrature import QuadratureBudget
from app.dto.sphere import IdentityResidual, TangentVector
from app.errors import SphereDomainError
from app.service.field_service import FieldSample, FieldService
from app.service.quadrature_service import QuadratureService


class SphereService:
    """Spherical gradient and the integration-by-parts identity on S^n."""

    field_service: FieldService
    quadrature_service: QuadratureService
    tolerance: float

    def __init__(
        self,
        field_service: FieldService | None = None,
        quadrature_service: QuadratureService | None = None,
        tolerance: float | None = None,
    ) -> None:
        self.field_service = field_service or FieldService()
        self.quadrature_service = quadrature_service or QuadratureService()
        self.tolerance = tolerance if tolerance is not None else config.sphere_tolerance

    def project(self, points: np.ndarray) -> np.ndarray:
        """Check that rows lie on the unit sphere and renormalize them exactly."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        norms = np.sqrt(np.sum(points * points, axis=1))
        drift = np.abs(norms - 1.0)
        if np.any(drift > self.tolerance):
            row = int(np.argmax(drift))
            raise SphereDomainError(f"point {points[row].tolist()} is off the unit sphere (|x| - 1 = {drift[row]:.3e})")
        return points / norms[:, None]

    def sample(self, field: FieldSpec, points: np.ndarray, order: int = 1) -> FieldSample:
        """Jets of the homogeneous extension at sphere points; gradients are spherical gradients."""
        extension = self.field_service.restrict_to_sphere(field)
        return self.field_service.sample(extension, self.project(points), order=order)

    def spherical_gradient(self, field: FieldSpec, x: Point) -> list[TangentVector]:
        """One tangent vector per component (a single complex one for complex fields)."""
        base = self.project(np.array([x.coords]))
        jet = self.sample(field, base).point_jet()
        base_coords = tuple(base[0].tolist())

        if np.iscomplexobj(jet.grad):
            return [
                TangentVector(
                    base=base_coords,
                    components=tuple(jet.grad[0].real.tolist()),
                    components_imag=tuple(jet.grad[0].imag.tolist()),
                )
            ]
        return [TangentVector(base=base_coords, components=tuple(row.tolist())) for row in jet.grad]

    def gamma_coordinate(self, j: int, k: int, x: Point) -> float:
        """Closed form of Gamma_j(x_k): 1 - x_j^2 when j = k, otherwise -x_j x_k."""
        coords = self.project(np.array([x.coords]))[0]
        dim = len(coords)
        if not (0 <= j < dim and 0 <= k < dim):
            raise SphereDomainError(f"indices ({j}, {k}) outside 0..{dim - 1}")
        if j == k:
            return float(1.0 - coords[j] * coords[j])
        return float(-coords[j] * coords[k])

    def integration_by_parts_residual(
        self, f: FieldSpec, g: FieldSpec, j: int, budget: QuadratureBudget | None = None
    ) -> IdentityResidual:
        """Residual of Int (Gamma_j f) g = n Int x_j f g - Int f (Gamma_j g) over S^n.

        Complex fields are integrated as (real, imaginary) column pairs.
        """
        domain = f.domain
        if domain is None or domain.kind != "sphere" or g.domain != domain:
            raise SphereDomainError("both fields must live on the same sphere domain")
        n = domain.n
        if not 0 <= j <= n:
            raise SphereDomainError(f"index {j} outside 0..{n}")

        def as_complex(sample: FieldSample) -> tuple[np.ndarray, np.ndarray]:
            if sample.codomain == "complex":
                return (
                    sample.values[:, 0] + 1j * sample.values[:, 1],
                    sample.grads[:, 0, j] + 1j * sample.grads[:, 1, j],
                )
            if sample.codomain == "vector":
                raise SphereDomainError("integration by parts is defined for scalar fields")
            return sample.values[:, 0].astype(complex), sample.grads[:, 0, j].astype(complex)

        def integrand(points: np.ndarray) -> np.ndarray:
            f_value, f_gamma = as_complex(self.sample(f, points))
            g_value, g_gamma = as_complex(self.sample(g, points))
            lhs = f_gamma * g_value
            rhs = n * points[:, j] * f_value * g_value - f_value * g_gamma
            return np.column_stack([lhs.real, lhs.imag, rhs.real, rhs.imag])

        lhs_re, lhs_im, rhs_re, rhs_im = self.quadrature_service.integrate_sn_many(integrand, n, budget)
        residual = math.hypot(lhs_re.value - rhs_re.value, lhs_im.value - rhs_im.value)
        error = math.fsum(e.error_estimate for e in (lhs_re, lhs_im, rhs_re, rhs_im))
        return IdentityResidual(residual=residual, error_estimate=error, lhs=lhs_re.value, rhs=rhs_re.value)
