from dataclasses import dataclass
import math
from typing import Literal

from loguru import logger
import numpy as np

from app.config import config
from app.dto.field import FieldSpec, Point, parse_field
from app.dto.inequality import CknParams, GeneralCknParams, TheoremId
from app.dto.quadrature import QuadratureBudget
from app.dto.selftest import SelftestReport, SelftestRow
from app.errors import CknLabError
from app.service.field_service import FieldService
from app.service.inequality_service import InequalityService
from app.service.phase_service import direct_magnitude_sq
from app.service.quadrature_service import QuadratureService
from app.service.sphere_service import SphereService
from app.service.stats_service import StatsService

FD_STEP = 1e-5
FD_TOLERANCE = 1e-6
PHASE_TOLERANCE = 1e-10
GAMMA_TOLERANCE = 1e-12
MOMENT_TOLERANCE = 1e-12
GAUSSIAN_TOLERANCE = 1e-10
RESIDUAL_FLOOR = 1e-12
EUCLIDEAN_DIM = 3

# random fields (or field pairs) drawn per check
FIELD_COUNTS = {
    "ad": 3,
    "phase_identity": 3,
    "second_order_identity": 10,
    "integration_by_parts": 20,
    "variance_decomposition": 10,
    "frequency_mean": 10,
}
FALSIFICATION_PAIRS = 50
SELFTEST_MAX_NODES = 2**20

# sphere_vector_energy comes with sphere_vector
FALSIFIED_THEOREMS = [theorem_id for theorem_id in TheoremId if theorem_id != TheoremId.SPHERE_VECTOR_ENERGY]


def _coef(rng: np.random.Generator, low: float = -1.0, high: float = 1.0) -> str:
    return format(float(rng.uniform(low, high)), ".6f")


def random_expression(rng: np.random.Generator, first: int, last: int, envelope: bool = False) -> str:
    """Smooth random polynomial-trigonometric expression in coordinates first..last."""
    i, j, k = (int(index) for index in rng.integers(first, last + 1, size=3))
    terms = [_coef(rng, 0.5, 1.5)]
    terms += [f"(mul {_coef(rng)} (coord {c}))" for c in range(first, last + 1)]
    terms.append(f"(mul {_coef(rng)} (coord {i}) (coord {j}))")
    terms.append(f"(sin (mul {_coef(rng)} (coord {k})))")
    body = f"(add {' '.join(terms)})"
    if not envelope:
        return body
    radius_sq = " ".join(f"(pow (coord {c}) 2)" for c in range(first, last + 1))
    return f"(mul (exp (mul {_coef(rng, -0.8, -0.4)} (add {radius_sq}))) {body})"


def _random_data(
    rng: np.random.Generator, first: int, last: int, codomain: str, components: int, envelope: bool
) -> dict:
    def custom() -> dict:
        return {"family": "custom", "expr": random_expression(rng, first, last, envelope)}

    match codomain:
        case "real":
            return custom()
        case "complex":
            return {"family": "complex", "real": custom(), "imag": custom()}
        case _:
            return {"family": "vector", "components": [custom() for _ in range(components)]}


def random_sphere_field(
    rng: np.random.Generator, n: int, codomain: Literal["real", "complex", "vector"] = "complex", components: int = 2
) -> FieldSpec:
    """Random smooth field on S^n (coordinates x_0..x_n)."""
    data = _random_data(rng, 0, n, codomain, components, envelope=False)
    return parse_field({**data, "domain": {"sphere": n}})


def random_euclidean_field(
    rng: np.random.Generator,
    n: int,
    codomain: Literal["real", "complex", "vector"] = "real",
    components: int = 2,
    envelope: bool = True,
) -> FieldSpec:
    """Random smooth field on R^n (coordinates x_1..x_n), Gaussian-damped unless ``envelope`` is off."""
    data = _random_data(rng, 1, n, codomain, components, envelope)
    return parse_field({**data, "domain": {"euclidean": n}})


def _ratio(residual: float, error: float) -> float:
    if error > 0:
        return residual / error
    return 0.0 if residual == 0 else math.inf


def fit_budget(budget: QuadratureBudget, n: int, sphere: bool, limit: int = SELFTEST_MAX_NODES) -> QuadratureBudget:
    """Lower angular_nodes until the finest S^n (or R^n) grid of ``budget`` has at most ``limit`` nodes."""
    scale = 2**budget.refine_levels
    radial = 1 if sphere else budget.radial_nodes * scale
    exponent = n if sphere else n - 1
    angular = budget.angular_nodes
    while angular > 2 and radial * (angular * scale) ** exponent > limit:
        angular -= 1
    if angular == budget.angular_nodes:
        return budget
    logger.debug(f"Self-test uses {angular} angular nodes in dimension {n}")
    return budget.model_copy(update={"angular_nodes": angular})


def random_ckn_params(rng: np.random.Generator, n: int = EUCLIDEAN_DIM) -> CknParams:
    """(p, q) strictly inside 0 < q < 2 < p, 2 < n < 2(p - q)/(p - 2)."""
    p = float(rng.uniform(2.2, min(4.5, (n - 0.3) / (n / 2 - 1))))
    q = float(rng.uniform(0.1, min(1.9, p - n * (p - 2) / 2 - 0.1)))
    return CknParams(n=n, p=p, q=q)


def random_general_params(rng: np.random.Generator) -> GeneralCknParams:
    """r > p > 2 with weights small enough that every positivity constraint holds on R^3."""
    p = float(rng.uniform(2.2, 4.0))
    return GeneralCknParams(
        n=EUCLIDEAN_DIM,
        p=p,
        r=float(rng.uniform(p + 0.2, p + 3.0)),
        alpha=float(rng.uniform(-0.5, 0.5)),
        beta=float(rng.uniform(-0.3, 0.5)),
    )


def twisted_sphere_field(rng: np.random.Generator, n: int) -> FieldSpec:
    """rho(x_0) exp(i lam x_1 x_2) on S^n; its a*(f) vanishes by the x_1 -> -x_1 symmetry."""
    lam = _coef(rng, 0.5, 3.0)
    return parse_field(
        {
            "family": "polar",
            "amplitude": {"family": "custom", "expr": random_expression(rng, 0, 0)},
            "phase": {"family": "custom", "expr": f"(mul {lam} (coord 1) (coord 2))"},
            "domain": {"sphere": n},
        }
    )


@dataclass(frozen=True)
class CorpusCase:
    """One admissible (params, field) pair for a checker."""

    field: FieldSpec
    n: int
    params: CknParams | None = None
    general_params: GeneralCknParams | None = None


def falsification_case(rng: np.random.Generator, theorem_id: TheoremId, n_max: int) -> CorpusCase:
    """Random admissible input for ``theorem_id``; sphere cases draw n from 2..n_max."""
    if theorem_id.on_sphere:
        n = int(rng.integers(2, n_max + 1))
        match theorem_id:
            case TheoremId.SPHERE_COMPLEX:
                # the uncentered bound needs a*(f) = 0
                if rng.random() < 0.5:
                    return CorpusCase(field=random_sphere_field(rng, n, "real"), n=n)
                return CorpusCase(field=twisted_sphere_field(rng, n), n=n)
            case TheoremId.SPHERE_VECTOR | TheoremId.SPHERE_VECTOR_ENERGY:
                components = int(rng.integers(2, 5))
                return CorpusCase(field=random_sphere_field(rng, n, "vector", components), n=n)
            case _:
                return CorpusCase(field=random_sphere_field(rng, n, "complex"), n=n)

    n = EUCLIDEAN_DIM
    match theorem_id:
        case TheoremId.CKN_COMPLEX:
            return CorpusCase(field=random_euclidean_field(rng, n, "complex"), n=n, params=random_ckn_params(rng))
        case TheoremId.CKN_VECTOR:
            field = random_euclidean_field(rng, n, "vector", int(rng.integers(2, 5)))
            return CorpusCase(field=field, n=n, params=random_ckn_params(rng))
        case TheoremId.SECOND_ORDER:
            return CorpusCase(field=random_euclidean_field(rng, n, "real"), n=n, params=random_ckn_params(rng))
        case TheoremId.HPW:
            return CorpusCase(field=random_euclidean_field(rng, n, "complex"), n=n)
        case _:
            field = random_euclidean_field(rng, n, "complex")
            return CorpusCase(field=field, n=n, general_params=random_general_params(rng))


class SelftestService:
    """Identity suite run against seeded random fields; every row is a value checked against a tolerance."""

    field_service: FieldService
    quadrature_service: QuadratureService
    sphere_service: SphereService
    stats_service: StatsService
    inequality_service: InequalityService
    tolerance_factor: float

    def __init__(
        self,
        quadrature_service: QuadratureService | None = None,
        fields_per_check: int | None = None,
        points_per_check: int = 100,
        falsification_pairs: int = FALSIFICATION_PAIRS,
    ) -> None:
        """``fields_per_check`` overrides every entry of FIELD_COUNTS when given."""
        self.field_service = FieldService()
        self.quadrature_service = quadrature_service or QuadratureService()
        self.sphere_service = SphereService(self.field_service, self.quadrature_service)
        self.stats_service = StatsService(self.sphere_service, self.quadrature_service)
        self.inequality_service = InequalityService(self.field_service, self.quadrature_service, self.stats_service)
        self.tolerance_factor = config.tolerance_factor
        self.fields_per_check = fields_per_check
        self.points_per_check = points_per_check
        self.falsification_pairs = falsification_pairs

    def run(self, n_max: int = 3, seed: int = 42, budget: QuadratureBudget | None = None) -> SelftestReport:
        budget = budget or QuadratureBudget(radial_nodes=64, angular_nodes=16, refine_levels=1)
        rng = np.random.default_rng(seed)
        logger.info(f"Running self-test up to n = {n_max} (seed {seed})")

        rows = [
            self.ad_gradient(rng),
            self.ad_hessian(rng),
            *self.phase_identity(rng),
            self.second_order_identity(rng, budget),
        ]
        for n in range(1, n_max + 1):
            rows.append(self.euclidean_moment(n, fit_budget(budget, n, sphere=False)))
        for n in range(2, n_max + 1):
            sphere_budget = fit_budget(budget, n, sphere=True)
            rows += [
                self.sphere_moment(n, sphere_budget),
                self.gamma_closed_form(rng, n),
                self.integration_by_parts(rng, n, sphere_budget),
                self.integration_by_parts_refinement(rng, n, sphere_budget),
                *self.variance_decompositions(rng, n, sphere_budget),
                self.frequency_mean(rng, n, sphere_budget),
            ]
        rows += [self.falsification(rng, theorem_id, n_max, budget) for theorem_id in FALSIFIED_THEOREMS]

        failed = [row.check for row in rows if not row.passed]
        if failed:
            logger.warning(f"Self-test failures: {', '.join(failed)}")
        return SelftestReport(seed=seed, n_max=n_max, rows=rows, passed=not failed)

    def _count(self, check: str) -> int:
        return self.fields_per_check or FIELD_COUNTS[check]

    def _row(self, check: str, n: int, value: float, tolerance: float) -> SelftestRow:
        return SelftestRow(check=check, n=n, value=value, tolerance=tolerance, passed=bool(value <= tolerance))

    def ad_gradient(self, rng: np.random.Generator) -> SelftestRow:
        """Relative gap between AD gradients and central differences of the values."""
        worst = 0.0
        for _ in range(self._count("ad")):
            field = random_euclidean_field(rng, EUCLIDEAN_DIM, "complex")
            points = rng.uniform(-1.0, 1.0, size=(self.points_per_check, EUCLIDEAN_DIM))
            grads = self.field_service.sample(field, points).grads
            for k in range(EUCLIDEAN_DIM):
                shift = np.zeros(EUCLIDEAN_DIM)
                shift[k] = FD_STEP
                forward = self.field_service.sample(field, points + shift).values
                backward = self.field_service.sample(field, points - shift).values
                estimate = (forward - backward) / (2 * FD_STEP)
                scale = np.maximum(1.0, np.abs(grads[:, :, k]))
                worst = max(worst, float(np.max(np.abs(estimate - grads[:, :, k]) / scale)))
        return self._row("ad_gradient", EUCLIDEAN_DIM, worst, FD_TOLERANCE)

    def ad_hessian(self, rng: np.random.Generator) -> SelftestRow:
        """Relative gap between AD Hessians and central differences of AD gradients."""
        worst = 0.0
        for _ in range(self._count("ad")):
            field = random_euclidean_field(rng, EUCLIDEAN_DIM, "real")
            points = rng.uniform(-1.0, 1.0, size=(self.points_per_check, EUCLIDEAN_DIM))
            hessians = self.field_service.sample(field, points, order=2).hessians
            for k in range(EUCLIDEAN_DIM):
                shift = np.zeros(EUCLIDEAN_DIM)
                shift[k] = FD_STEP
                forward = self.field_service.sample(field, points + shift).grads
                backward = self.field_service.sample(field, points - shift).grads
                estimate = (forward - backward) / (2 * FD_STEP)
                exact = hessians[:, :, :, k]
                scale = np.maximum(1.0, np.abs(exact))
                worst = max(worst, float(np.max(np.abs(estimate - exact) / scale)))
        return self._row("ad_hessian", EUCLIDEAN_DIM, worst, FD_TOLERANCE)

    def phase_identity(self, rng: np.random.Generator) -> list[SelftestRow]:
        """|grad f|^2 = |grad|f||^2 + |f|^2 |Phi'|^2 with Phi' from the direct pair sum, where |f| > 1e-6."""
        cases = [("phase_identity_complex", "complex", 2)] + [
            (f"phase_identity_vector_m{m}", "vector", m) for m in (2, 3, 4)
        ]
        rows = []
        for check, codomain, components in cases:
            worst = 0.0
            for _ in range(self._count("phase_identity")):
                field = random_euclidean_field(rng, EUCLIDEAN_DIM, codomain, components, envelope=False)
                points = rng.uniform(-1.0, 1.0, size=(self.points_per_check, EUCLIDEAN_DIM))
                sample = self.field_service.sample(field, points)
                amp_sq = sample.amplitude_sq
                mask = amp_sq > 1e-12
                half_grad = np.einsum("nm,nmd->nd", sample.values, sample.grads)
                amp_grad_sq = np.sum(half_grad * half_grad, axis=1)[mask] / amp_sq[mask]
                grad_sq = sample.grad_sq[mask]
                phase_sq = direct_magnitude_sq(sample)[mask] * amp_sq[mask]
                gap = np.abs(grad_sq - amp_grad_sq - phase_sq) / np.maximum(grad_sq, 1e-300)
                worst = max(worst, float(np.max(gap, initial=0.0)))
            rows.append(self._row(check, EUCLIDEAN_DIM, worst, PHASE_TOLERANCE))
        return rows

    def second_order_identity(self, rng: np.random.Generator, budget: QuadratureBudget) -> SelftestRow:
        """Int|grad grad u|^2 = Int|Laplacian u|^2 for decaying u on R^3."""
        worst = 0.0
        for _ in range(self._count("second_order_identity")):
            u = random_euclidean_field(rng, EUCLIDEAN_DIM, "real")

            def integrand(points: np.ndarray, u: FieldSpec = u) -> np.ndarray:
                hessians = self.field_service.sample(u, points, order=2).hessians[:, 0]
                laplacian = np.trace(hessians, axis1=1, axis2=2)
                return np.column_stack([np.sum(hessians * hessians, axis=(1, 2)), laplacian * laplacian])

            hessian, laplacian = self.quadrature_service.integrate_weighted_rn_many(
                integrand, 0.0, EUCLIDEAN_DIM, budget
            )
            residual = abs(hessian.value - laplacian.value)
            worst = max(worst, _ratio(residual, hessian.error_estimate + laplacian.error_estimate))
        return self._row("second_order_identity", EUCLIDEAN_DIM, worst, self.tolerance_factor)

    def euclidean_moment(self, n: int, budget: QuadratureBudget) -> SelftestRow:
        """Relative error of Int exp(-|x|^2) = pi^(n/2)."""
        estimate = self.quadrature_service.integrate_rn(lambda x: np.exp(-np.sum(x * x, axis=1)), n, budget)
        exact = math.pi ** (n / 2)
        return self._row("gaussian_moment", n, abs(estimate.value - exact) / exact, GAUSSIAN_TOLERANCE)

    def sphere_moment(self, n: int, budget: QuadratureBudget) -> SelftestRow:
        """Int x_0^2 = 1/(n+1) and Int x_0^4 = 3/((n+1)(n+3)) on S^n."""
        second, fourth = self.quadrature_service.integrate_sn_many(
            lambda x: np.column_stack([x[:, 0] ** 2, x[:, 0] ** 4]), n, budget
        )
        gap = max(abs(second.value - 1 / (n + 1)), abs(fourth.value - 3 / ((n + 1) * (n + 3))))
        return self._row("sphere_moment", n, gap, MOMENT_TOLERANCE)

    def gamma_closed_form(self, rng: np.random.Generator, n: int) -> SelftestRow:
        """Gamma_j(x_k) from the closed form against the AD spherical gradient of the coordinate fields."""
        points = rng.standard_normal((self.points_per_check, n + 1))
        points /= np.linalg.norm(points, axis=1)[:, None]
        points = self.sphere_service.project(points)

        worst = 0.0
        for k in range(n + 1):
            coordinate = parse_field({"family": "affine_harmonic", "a": 0.0, "b": 1.0, "j": k, "domain": {"sphere": n}})
            grads = self.sphere_service.sample(coordinate, points).grads[:, 0, :]
            for row, x in enumerate(points):
                point = Point(coords=tuple(x.tolist()))
                closed = [self.sphere_service.gamma_coordinate(j, k, point) for j in range(n + 1)]
                worst = max(worst, float(np.max(np.abs(grads[row] - closed))))
        return self._row("gamma_closed_form", n, worst, GAMMA_TOLERANCE)

    def integration_by_parts(self, rng: np.random.Generator, n: int, budget: QuadratureBudget) -> SelftestRow:
        worst = 0.0
        for _ in range(self._count("integration_by_parts")):
            f, g, j = self._integration_by_parts_pair(rng, n)
            result = self.sphere_service.integration_by_parts_residual(f, g, j, budget)
            worst = max(worst, _ratio(result.residual, result.error_estimate))
        return self._row("integration_by_parts", n, worst, self.tolerance_factor)

    @staticmethod
    def _integration_by_parts_pair(rng: np.random.Generator, n: int) -> tuple[FieldSpec, FieldSpec, int]:
        return random_sphere_field(rng, n, "complex"), random_sphere_field(rng, n, "real"), int(rng.integers(0, n + 1))

    def integration_by_parts_refinement(
        self, rng: np.random.Generator, n: int, budget: QuadratureBudget
    ) -> SelftestRow:
        """Worst ratio of the residual after one doubling of the angular nodes to the residual before it.

        Starts from a quarter of the budget's angular nodes so the coarse rule is not yet exact.
        """
        coarse = budget.model_copy(update={"angular_nodes": max(2, budget.angular_nodes // 4), "refine_levels": 0})
        fine = coarse.model_copy(update={"angular_nodes": 2 * coarse.angular_nodes})
        worst = 0.0
        for _ in range(self._count("integration_by_parts")):
            f, g, j = self._integration_by_parts_pair(rng, n)
            before = self.sphere_service.integration_by_parts_residual(f, g, j, coarse).residual
            after = self.sphere_service.integration_by_parts_residual(f, g, j, fine).residual
            worst = max(worst, after / max(before, RESIDUAL_FLOOR))
        return self._row("integration_by_parts_refinement", n, worst, 1.0)

    def variance_decompositions(self, rng: np.random.Generator, n: int, budget: QuadratureBudget) -> list[SelftestRow]:
        complex_worst = star_worst = vector_worst = 0.0
        for _ in range(self._count("variance_decomposition")):
            residuals = self.stats_service.variance_decomposition_residuals(random_sphere_field(rng, n), n, budget)
            complex_worst = max(complex_worst, _ratio(residuals.res1, residuals.res1_error))
            star_worst = max(star_worst, _ratio(residuals.res2 or 0.0, residuals.res2_error or 0.0))

            vector = random_sphere_field(rng, n, "vector", components=int(rng.integers(2, 5)))
            residuals = self.stats_service.variance_decomposition_residuals(vector, n, budget)
            vector_worst = max(vector_worst, _ratio(residuals.res1, residuals.res1_error))

        return [
            self._row("variance_decomposition_complex", n, complex_worst, self.tolerance_factor),
            self._row("variance_decomposition_star", n, star_worst, self.tolerance_factor),
            self._row("variance_decomposition_vector", n, vector_worst, self.tolerance_factor),
        ]

    def frequency_mean(self, rng: np.random.Generator, n: int, budget: QuadratureBudget) -> SelftestRow:
        """Re a(f) = (n/2) tau_f for complex and vector fields."""
        worst = 0.0
        for codomain in ("complex", "vector"):
            for _ in range(self._count("frequency_mean")):
                result = self.stats_service.frequency_mean_residual(random_sphere_field(rng, n, codomain), n, budget)
                worst = max(worst, _ratio(result.residual, result.error_estimate))
        return self._row("frequency_mean", n, worst, self.tolerance_factor)

    def falsification(
        self, rng: np.random.Generator, theorem_id: TheoremId, n_max: int, budget: QuadratureBudget
    ) -> SelftestRow:
        """Number of random admissible inputs on which the checker reports a violation or cannot evaluate."""
        failures = 0
        for _ in range(self.falsification_pairs):
            case = falsification_case(rng, theorem_id, n_max)
            case_budget = fit_budget(budget, case.n, sphere=theorem_id.on_sphere)
            try:
                reports = self.inequality_service.verify(
                    theorem_id, case.field, case.params, case.general_params, case.n, case_budget
                )
            except CknLabError as error:
                logger.warning(f"{theorem_id} could not be evaluated on a corpus field: {error}")
                failures += 1
                continue
            if not all(report.holds for report in reports):
                failures += 1
        n = n_max if theorem_id.on_sphere else EUCLIDEAN_DIM
        return self._row(f"falsification_{theorem_id}", n, float(failures), 0.0)
