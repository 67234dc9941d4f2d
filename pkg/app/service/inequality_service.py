from collections.abc import Callable, Sequence
from dataclasses import dataclass
import math

from loguru import logger
import numpy as np

from app.config import config
from app.dto.field import FieldSpec
from app.dto.inequality import CknParams, GeneralCknParams, InequalityReport, QuadratureEntry, TheoremId
from app.dto.quadrature import IntegralEstimate, QuadratureBudget
from app.dto.sphere import SphereStats
from app.errors import FieldEvaluationError
from app.service.field_service import FieldSample, FieldService
from app.service.phase_service import SplitTerms, split_terms
from app.service.quadrature_service import QuadratureService
from app.service.stats_service import StatsService

# (lhs, rhs_classical, cov_term) from named integral values
type Assembly = Callable[[dict[str, float]], tuple[float, float, float]]


@dataclass(frozen=True)
class NodeTerms:
    """Everything an integrand may need at a batch of quadrature nodes."""

    points: np.ndarray
    sample: FieldSample
    split: SplitTerms

    @property
    def amplitude(self) -> np.ndarray:
        return self.split.amplitude

    @property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.points * self.points, axis=1))


# name -> (weight exponent s for |x|^-s, integrand)
type IntegralPlan = dict[str, tuple[float, Callable[[NodeTerms], np.ndarray]]]


def propagated_tolerance(
    slack_of: Callable[[Sequence[float]], float], values: Sequence[float], errors: Sequence[float], factor: float
) -> float:
    """factor * sqrt(sum_k delta_k^2), delta_k the slack change when input k moves by its error estimate."""
    base = slack_of(values)
    deltas = []
    for k, error in enumerate(errors):
        shifted = list(values)
        shifted[k] += error
        deltas.append(slack_of(shifted) - base)
    return factor * math.sqrt(math.fsum(delta * delta for delta in deltas))


def _entry(name: str, estimate: IntegralEstimate) -> QuadratureEntry:
    return QuadratureEntry(
        name=name, value=estimate.value, error_estimate=estimate.error_estimate, flagged=estimate.flagged
    )


def _ratio(lhs: float, rhs: float) -> float | None:
    return lhs / rhs if rhs != 0 else None


class InequalityService:
    """One checker per inequality; every report carries the integrals it was built from."""

    field_service: FieldService
    quadrature_service: QuadratureService
    stats_service: StatsService
    tolerance_factor: float
    amplitude_floor: float

    def __init__(
        self,
        field_service: FieldService | None = None,
        quadrature_service: QuadratureService | None = None,
        stats_service: StatsService | None = None,
        tolerance_factor: float | None = None,
    ) -> None:
        self.field_service = field_service or FieldService()
        self.quadrature_service = quadrature_service or QuadratureService()
        self.stats_service = stats_service or StatsService(quadrature_service=self.quadrature_service)
        self.tolerance_factor = tolerance_factor if tolerance_factor is not None else config.tolerance_factor
        self.amplitude_floor = config.amplitude_floor

    # Euclidean inequalities

    def check_ckn_complex(
        self, params: CknParams, f: FieldSpec, budget: QuadratureBudget | None = None
    ) -> InequalityReport:
        if f.codomain == "vector":
            raise FieldEvaluationError("check_ckn_complex needs a complex (or real) field")
        return self._ckn_report(TheoremId.CKN_COMPLEX, f, params.n, params.p, params.q, budget)

    def check_ckn_vector(
        self, params: CknParams, f: FieldSpec, budget: QuadratureBudget | None = None
    ) -> InequalityReport:
        if f.codomain != "vector":
            raise FieldEvaluationError("check_ckn_vector needs a vector field")
        return self._ckn_report(TheoremId.CKN_VECTOR, f, params.n, params.p, params.q, budget)

    def check_hpw(self, n: int, f: FieldSpec, budget: QuadratureBudget | None = None) -> InequalityReport:
        """The p = 2, q = 0 case of the CKN assembly, with weights |x|^2 and |x|."""
        return self._ckn_report(TheoremId.HPW, f, n, 2.0, 0.0, budget)

    def check_second_order(
        self, u: FieldSpec, params: CknParams, budget: QuadratureBudget | None = None
    ) -> InequalityReport:
        """CKN applied to grad u, with Int|grad grad u|^2 replaced by Int|Laplacian u|^2."""
        if u.codomain != "real":
            raise FieldEvaluationError("check_second_order needs a real scalar field")
        n, p, q = params.n, params.p, params.q
        self._require_euclidean(u, n)

        def laplacian_sq(terms: NodeTerms) -> np.ndarray:
            laplacian = np.trace(terms.sample.grads, axis1=1, axis2=2)
            return laplacian * laplacian

        plan: IntegralPlan = {
            "laplacian_energy": (0.0, laplacian_sq),
            "hessian_energy": (0.0, lambda t: t.split.grad_sq),
            **self._ckn_weights(p, q),
        }
        estimates = self._integrate(u, n, plan, budget, gradient_of_field=True)

        hessian, laplacian = estimates["hessian_energy"], estimates["laplacian_energy"]
        return self._report(
            TheoremId.SECOND_ORDER,
            n,
            [_entry(name, estimate) for name, estimate in estimates.items() if name != "hessian_energy"],
            self._ckn_assembly(n, p, q, lhs_gradient="laplacian_energy"),
            p=p,
            q=q,
            extra_entries=[_entry("hessian_energy", hessian)],
            identity=(
                abs(hessian.value - laplacian.value),
                hessian.error_estimate + laplacian.error_estimate,
            ),
        )

    def check_ckn_general(
        self, params: GeneralCknParams, f: FieldSpec, budget: QuadratureBudget | None = None
    ) -> InequalityReport:
        """(Int|x|^{ap}|grad f|^p)(Int|x|^b|f|^{p(r-1)/(p-1)})^{p-1} >= ((n+gr)/r)^p (Int|x|^{gr}|f|^r)^p + COV^p."""
        n, p, r = params.n, params.p, params.r
        alpha, beta = params.alpha, params.beta
        gamma = params.gamma if params.gamma is not None else params.expected_gamma
        exponent = params.amplitude_exponent
        self._require_euclidean(f, n)

        plan: IntegralPlan = {
            "weighted_gradient": (-alpha * p, lambda t: t.split.grad_sq ** (p / 2)),
            "weighted_amplitude": (-beta, lambda t: t.amplitude**exponent),
            "weighted_moment": (-gamma * r, lambda t: t.amplitude**r),
            "cov": (-(r * gamma + 1), lambda t: t.amplitude ** (r - 1) * t.split.amp_times_phase),
        }
        estimates = self._integrate(f, n, plan, budget)

        def assemble(values: dict[str, float]) -> tuple[float, float, float]:
            lhs = values["weighted_gradient"] * values["weighted_amplitude"] ** (p - 1)
            classical = ((n + gamma * r) / r) ** p * values["weighted_moment"] ** p
            return lhs, classical, max(values["cov"], 0.0) ** p

        return self._report(
            TheoremId.CKN_GENERAL,
            n,
            [_entry(name, estimate) for name, estimate in estimates.items()],
            assemble,
            p=p,
        )

    # Sphere inequalities

    def check_sphere_complex(self, f: FieldSpec, n: int, budget: QuadratureBudget | None = None) -> InequalityReport:
        """V_x V >= (n^2/4)|tau|^4 + COV^2, with the complex frequency mean a(f)."""
        stats = self._complex_stats(f, n, budget)
        return self._sphere_report(TheoremId.SPHERE_COMPLEX, stats, "var_freq", "cov", tau_power=4)

    def check_sphere_complex_star(
        self, f: FieldSpec, n: int, budget: QuadratureBudget | None = None
    ) -> InequalityReport:
        stats = self._complex_stats(f, n, budget)
        return self._sphere_report(TheoremId.SPHERE_COMPLEX_STAR, stats, "var_freq_star", "cov_star", tau_power=4)

    def check_sphere_complex_centered(
        self, f: FieldSpec, n: int, budget: QuadratureBudget | None = None
    ) -> InequalityReport:
        """V_x V >= (n^2/4)|tau|^4 + COV*^2; holds for every complex field, including a*(f) != 0."""
        stats = self._complex_stats(f, n, budget)
        return self._sphere_report(TheoremId.SPHERE_COMPLEX_CENTERED, stats, "var_freq", "cov_star", tau_power=4)

    def check_sphere_corollary(
        self, f: FieldSpec, n: int, budget: QuadratureBudget | None = None
    ) -> InequalityReport:
        """V_x Int|grad_S f|^2 >= (n^2/4)|tau|^2 + COV^2."""
        stats = self._complex_stats(f, n, budget)
        return self._sphere_report(TheoremId.SPHERE_COROLLARY, stats, "grad_energy", "cov", tau_power=2)

    def check_sphere_vector(
        self, f: FieldSpec, n: int, budget: QuadratureBudget | None = None
    ) -> tuple[InequalityReport, InequalityReport]:
        """Both forms of the vector sphere inequality; each carries the |a(f)|^2 = (n^2/4)|tau|^2 residual."""
        if f.codomain != "vector":
            raise FieldEvaluationError("check_sphere_vector needs a vector field")
        stats = self.stats_service.compute_stats(f, n, budget)

        a_norm = math.sqrt(math.fsum(a * a for a in stats.a_real))
        tau_norm = math.sqrt(stats.tau_norm_sq)
        residual = abs(a_norm * a_norm - n * n / 4 * tau_norm * tau_norm)
        error = 2 * a_norm * stats.errors["a_real"] + n * n / 2 * tau_norm * stats.errors["tau"]

        centered = self._sphere_report(
            TheoremId.SPHERE_VECTOR, stats, "var_freq", "cov", tau_power=4, identity=(residual, error)
        )
        energy = self._sphere_report(
            TheoremId.SPHERE_VECTOR_ENERGY, stats, "grad_energy", "cov", tau_power=2, identity=(residual, error)
        )
        return centered, energy

    # Dispatch

    def verify(
        self,
        theorem_id: TheoremId,
        f: FieldSpec,
        params: CknParams | None = None,
        general_params: GeneralCknParams | None = None,
        n: int | None = None,
        budget: QuadratureBudget | None = None,
    ) -> list[InequalityReport]:
        """Run one checker by id; ``n`` defaults to the field's domain dimension."""
        n = n if n is not None else (f.domain.n if f.domain is not None else None)
        logger.info(f"Verifying {theorem_id} (n = {n})")

        match theorem_id:
            case TheoremId.CKN_COMPLEX | TheoremId.CKN_VECTOR | TheoremId.SECOND_ORDER if params is None:
                raise FieldEvaluationError(f"{theorem_id} needs params {{n, p, q}}")
            case TheoremId.CKN_COMPLEX:
                return [self.check_ckn_complex(params, f, budget)]
            case TheoremId.CKN_VECTOR:
                return [self.check_ckn_vector(params, f, budget)]
            case TheoremId.SECOND_ORDER:
                return [self.check_second_order(f, params, budget)]
            case TheoremId.CKN_GENERAL:
                if general_params is None:
                    raise FieldEvaluationError("ckn_general needs general_params {n, p, r, alpha, beta}")
                return [self.check_ckn_general(general_params, f, budget)]

        if n is None:
            raise FieldEvaluationError(f"{theorem_id} needs a dimension n")

        match theorem_id:
            case TheoremId.HPW:
                return [self.check_hpw(n, f, budget)]
            case TheoremId.SPHERE_COMPLEX:
                return [self.check_sphere_complex(f, n, budget)]
            case TheoremId.SPHERE_COMPLEX_STAR:
                return [self.check_sphere_complex_star(f, n, budget)]
            case TheoremId.SPHERE_COMPLEX_CENTERED:
                return [self.check_sphere_complex_centered(f, n, budget)]
            case TheoremId.SPHERE_COROLLARY:
                return [self.check_sphere_corollary(f, n, budget)]
            case _:
                return list(self.check_sphere_vector(f, n, budget))

    # Assembly

    @staticmethod
    def _ckn_weights(p: float, q: float) -> IntegralPlan:
        return {
            "weighted_energy": (2 * q - 2, lambda t: t.amplitude ** (2 * p - 2)),
            "weighted_moment": (q, lambda t: t.amplitude**p),
            "cov": (q - 1, lambda t: t.amplitude ** (p - 1) * t.split.amp_times_phase),
        }

    @staticmethod
    def _ckn_assembly(n: int, p: float, q: float, lhs_gradient: str = "grad_energy") -> Assembly:
        constant = (n - q) ** 2 / p**2

        def assemble(values: dict[str, float]) -> tuple[float, float, float]:
            lhs = values[lhs_gradient] * values["weighted_energy"]
            return lhs, constant * values["weighted_moment"] ** 2, values["cov"] ** 2

        return assemble

    def _ckn_report(
        self, theorem_id: TheoremId, f: FieldSpec, n: int, p: float, q: float, budget: QuadratureBudget | None
    ) -> InequalityReport:
        self._require_euclidean(f, n)
        plan: IntegralPlan = {"grad_energy": (0.0, lambda t: t.split.grad_sq), **self._ckn_weights(p, q)}
        estimates = self._integrate(f, n, plan, budget)
        return self._report(
            theorem_id,
            n,
            [_entry(name, estimate) for name, estimate in estimates.items()],
            self._ckn_assembly(n, p, q),
            p=p,
            q=q,
        )

    def _integrate(
        self,
        field: FieldSpec,
        n: int,
        plan: IntegralPlan,
        budget: QuadratureBudget | None,
        gradient_of_field: bool = False,
    ) -> dict[str, IntegralEstimate]:
        """Integrate every planned integrand; integrands sharing a weight exponent share one grid pass."""
        groups: dict[float, list[str]] = {}
        for name, (s, _) in plan.items():
            groups.setdefault(float(s), []).append(name)

        estimates: dict[str, IntegralEstimate] = {}
        for s, names in groups.items():

            def integrand(points: np.ndarray, names: list[str] = names) -> np.ndarray:
                sample = self.field_service.sample(field, points, order=2 if gradient_of_field else 1)
                if gradient_of_field:
                    sample = sample.gradient_field()
                terms = NodeTerms(points=points, sample=sample, split=split_terms(sample, self.amplitude_floor))
                return np.column_stack([plan[name][1](terms) for name in names])

            results = self.quadrature_service.integrate_weighted_rn_many(integrand, s, n, budget)
            estimates.update(zip(names, results, strict=True))

        return {name: estimates[name] for name in plan}

    def _report(
        self,
        theorem_id: TheoremId,
        n: int,
        entries: list[QuadratureEntry],
        assemble: Assembly,
        p: float | None = None,
        q: float | None = None,
        extra_entries: list[QuadratureEntry] | None = None,
        identity: tuple[float, float] | None = None,
    ) -> InequalityReport:
        names = [entry.name for entry in entries]

        def slack_of(values: Sequence[float]) -> float:
            lhs, classical, cov_term = assemble(dict(zip(names, values, strict=True)))
            return lhs - classical - cov_term

        values = [entry.value for entry in entries]
        lhs, classical, cov_term = assemble(dict(zip(names, values, strict=True)))
        rhs = classical + cov_term
        slack = lhs - rhs
        tolerance = propagated_tolerance(
            slack_of, values, [entry.error_estimate for entry in entries], self.tolerance_factor
        )

        holds = slack >= -tolerance
        if not holds:
            logger.warning(f"{theorem_id} fails: slack {slack:.6e} below -{tolerance:.3e}")

        return InequalityReport(
            theorem_id=theorem_id,
            n=n,
            p=p,
            q=q,
            lhs=lhs,
            rhs_classical=classical,
            cov_term=cov_term,
            rhs_improved=rhs,
            slack=slack,
            relative_margin=slack / lhs if lhs != 0 else 0.0,
            holds=holds,
            tolerance=tolerance,
            ratio_classical=_ratio(lhs, classical),
            ratio_improved=_ratio(lhs, rhs),
            quadrature_errors=entries + (extra_entries or []),
            identity_residual=None if identity is None else identity[0],
            identity_error=None if identity is None else identity[1],
        )

    def _sphere_report(
        self,
        theorem_id: TheoremId,
        stats: SphereStats,
        frequency: str,
        covariance: str,
        tau_power: int,
        identity: tuple[float, float] | None = None,
    ) -> InequalityReport:
        n = stats.n
        errors = stats.errors
        entries = [
            QuadratureEntry(name="tau_norm", value=math.sqrt(stats.tau_norm_sq), error_estimate=errors["tau"]),
            QuadratureEntry(name="var_x", value=stats.var_x, error_estimate=errors["var_x"]),
            QuadratureEntry(name=frequency, value=getattr(stats, frequency), error_estimate=errors[frequency]),
            QuadratureEntry(name=covariance, value=getattr(stats, covariance), error_estimate=errors[covariance]),
        ]

        def assemble(values: dict[str, float]) -> tuple[float, float, float]:
            lhs = values["var_x"] * values[frequency]
            return lhs, n * n / 4 * values["tau_norm"] ** tau_power, values[covariance] ** 2

        return self._report(theorem_id, n, entries, assemble, identity=identity)

    def _complex_stats(self, f: FieldSpec, n: int, budget: QuadratureBudget | None) -> SphereStats:
        if f.codomain == "vector":
            raise FieldEvaluationError("complex sphere inequalities need a complex (or real) field")
        return self.stats_service.compute_stats(f, n, budget)

    @staticmethod
    def _require_euclidean(f: FieldSpec, n: int) -> None:
        domain = f.domain
        if domain is None or domain.kind != "euclidean":
            raise FieldEvaluationError("Euclidean inequalities need a field on a euclidean domain")
        if domain.n != n:
            raise FieldEvaluationError(f"field lives on R^{domain.n} but the inequality is posed on R^{n}")
