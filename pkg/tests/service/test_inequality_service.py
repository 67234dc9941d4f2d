import math

import pytest

from app.dto.field import FieldSpec, parse_field
from app.dto.inequality import CknParams, GeneralCknParams, TheoremId
from app.dto.quadrature import QuadratureBudget
from app.errors import FieldEvaluationError
from app.service.inequality_service import InequalityService, propagated_tolerance
from app.service.quadrature_service import QuadratureService

HALF_ROOT_3 = math.sqrt(3) / 2


@pytest.fixture
def inequality_service() -> InequalityService:
    return InequalityService(quadrature_service=QuadratureService(threads=2))


@pytest.fixture
def budget() -> QuadratureBudget:
    """Radial functions only need a coarse angular rule."""
    return QuadratureBudget(radial_nodes=64, angular_nodes=6, refine_levels=1)


@pytest.fixture
def sphere_budget() -> QuadratureBudget:
    return QuadratureBudget(angular_nodes=24, refine_levels=1)


@pytest.fixture
def gaussian() -> FieldSpec:
    """exp(-|x|^2/2) on R^3, an extremal of the Heisenberg-Pauli-Weyl inequality."""
    return parse_field({"family": "gaussian", "b": 0.5, "domain": {"euclidean": 3}})


@pytest.fixture
def chirped() -> FieldSpec:
    """exp(-|x|^2/2) exp(2i x_1) on R^3."""
    return parse_field({"family": "chirped_gaussian", "k": [2.0, 0.0, 0.0], "b": 0.5, "domain": {"euclidean": 3}})


@pytest.fixture
def twisted() -> FieldSpec:
    """(sqrt(3)/2)(1 + x_0) exp(i x_1) on S^2, a field with a*(f) != 0."""
    return parse_field(
        {
            "family": "polar",
            "amplitude": {"family": "affine_harmonic", "a": HALF_ROOT_3, "b": HALF_ROOT_3, "j": 0},
            "phase": {"family": "affine_harmonic", "j": 1},
            "domain": {"sphere": 2},
        }
    )


def test_hpw_gaussian_is_sharp(inequality_service: InequalityService, budget: QuadratureBudget, gaussian: FieldSpec):
    """Int|grad f|^2 Int|x|^2|f|^2 = (9/4) pi^3 = (n^2/4)(Int|f|^2)^2 for the Gaussian."""
    report = inequality_service.check_hpw(3, gaussian, budget)

    assert report.theorem_id == TheoremId.HPW
    assert report.p == 2.0
    assert report.q == 0.0
    assert report.lhs == pytest.approx(2.25 * math.pi**3, rel=1e-7)
    assert report.rhs_classical == pytest.approx(2.25 * math.pi**3, rel=1e-7)
    assert report.cov_term == pytest.approx(0.0, abs=1e-10)
    assert report.ratio_classical == pytest.approx(1.0, abs=1e-7)
    assert report.holds
    assert {entry.name for entry in report.quadrature_errors} == {
        "grad_energy",
        "weighted_energy",
        "weighted_moment",
        "cov",
    }


def test_hpw_chirped_gaussian(inequality_service: InequalityService, budget: QuadratureBudget, chirped: FieldSpec):
    """The chirp adds |k|^2 Int|f|^2 to the gradient energy and COV = Int 2|f|^2/|x| = 4 pi."""
    report = inequality_service.check_hpw(3, chirped, budget)
    cov = next(entry for entry in report.quadrature_errors if entry.name == "cov")

    assert cov.value == pytest.approx(4 * math.pi, rel=1e-7)
    assert report.lhs == pytest.approx(8.25 * math.pi**3, rel=1e-7)
    assert report.cov_term == pytest.approx(16 * math.pi**2, rel=1e-7)
    assert report.slack == pytest.approx(4 * math.pi**2 * (1.5 * math.pi - 4), rel=1e-7)
    assert report.holds
    assert report.ratio_improved < report.ratio_classical


def test_ckn_complex_and_vector(inequality_service: InequalityService, budget: QuadratureBudget, chirped: FieldSpec):
    params = CknParams(n=3, p=3.0, q=1.0)
    complex_report = inequality_service.check_ckn_complex(params, chirped, budget)
    assert complex_report.holds
    assert complex_report.cov_term > 0
    assert complex_report.rhs_improved == pytest.approx(complex_report.rhs_classical + complex_report.cov_term)

    vector = parse_field(
        {
            "family": "vector",
            "components": [{"family": "gaussian"}, {"family": "radial_rational", "a": 2.0, "c": 2.0}],
            "domain": {"euclidean": 3},
        }
    )
    vector_report = inequality_service.check_ckn_vector(params, vector, budget)
    assert vector_report.theorem_id == TheoremId.CKN_VECTOR
    assert vector_report.holds

    with pytest.raises(FieldEvaluationError, match=r"needs a vector field"):
        inequality_service.check_ckn_vector(params, chirped, budget)

    with pytest.raises(FieldEvaluationError, match=r"needs a complex \(or real\) field"):
        inequality_service.check_ckn_complex(params, vector, budget)


def test_second_order(inequality_service: InequalityService, budget: QuadratureBudget, gaussian: FieldSpec):
    """The Laplacian form holds and Int|grad grad u|^2 = Int|Laplacian u|^2."""
    report = inequality_service.check_second_order(gaussian, CknParams(n=3, p=3.0, q=1.0), budget)

    assert report.theorem_id == TheoremId.SECOND_ORDER
    assert report.holds
    names = [entry.name for entry in report.quadrature_errors]
    assert names[0] == "laplacian_energy"
    assert "hessian_energy" in names
    assert report.identity_residual <= 10 * report.identity_error + 1e-10

    with pytest.raises(FieldEvaluationError, match=r"needs a real scalar field"):
        inequality_service.check_second_order(
            parse_field({"family": "chirped_gaussian", "k": [1.0, 0.0, 0.0], "domain": {"euclidean": 3}}),
            CknParams(n=3, p=3.0, q=1.0),
            budget,
        )


def test_ckn_general(inequality_service: InequalityService, budget: QuadratureBudget, chirped: FieldSpec):
    params = GeneralCknParams(n=3, p=3.0, r=4.0, alpha=0.0, beta=0.0)
    report = inequality_service.check_ckn_general(params, chirped, budget)

    assert report.theorem_id == TheoremId.CKN_GENERAL
    assert report.p == 3.0
    assert report.holds
    assert report.cov_term > 0
    assert [entry.name for entry in report.quadrature_errors] == [
        "weighted_gradient",
        "weighted_amplitude",
        "weighted_moment",
        "cov",
    ]


def test_euclidean_checks_reject_wrong_domain(inequality_service: InequalityService, budget: QuadratureBudget):
    field = parse_field({"family": "gaussian", "domain": {"euclidean": 2}})
    with pytest.raises(FieldEvaluationError, match=r"field lives on R\^2 but the inequality is posed on R\^3"):
        inequality_service.check_hpw(3, field, budget)


def test_sphere_complex_reports_failure(
    inequality_service: InequalityService, sphere_budget: QuadratureBudget, twisted: FieldSpec
):
    """With a*(f) != 0 the uncentered covariance overshoots: V_x V = 0.345 is below the improved bound."""
    report = inequality_service.check_sphere_complex(twisted, 2, sphere_budget)

    assert report.lhs == pytest.approx(0.75 * 0.46, abs=1e-10)
    assert report.rhs_classical == pytest.approx(0.0625, abs=1e-10)
    assert report.lhs > report.rhs_classical
    assert not report.holds
    assert report.slack < 0


def test_sphere_complex_centered_holds(
    inequality_service: InequalityService, sphere_budget: QuadratureBudget, twisted: FieldSpec
):
    centered = inequality_service.check_sphere_complex_centered(twisted, 2, sphere_budget)
    assert centered.theorem_id == TheoremId.SPHERE_COMPLEX_CENTERED
    assert centered.lhs == pytest.approx(0.345, abs=1e-10)
    assert centered.holds

    star = inequality_service.check_sphere_complex_star(twisted, 2, sphere_budget)
    assert star.holds

    corollary = inequality_service.check_sphere_corollary(twisted, 2, sphere_budget)
    # V_x Int|grad_S f|^2 = 0.75 * 1.2 against (n^2/4)|tau|^2 = 1/4
    assert corollary.lhs == pytest.approx(0.9, abs=1e-10)
    assert corollary.rhs_classical == pytest.approx(0.25, abs=1e-10)
    assert corollary.holds


def test_sphere_vector(inequality_service: InequalityService, sphere_budget: QuadratureBudget):
    field = parse_field(
        {
            "family": "vector",
            "components": [
                {"family": "affine_harmonic", "a": 1.0, "b": 0.5, "j": 0},
                {"family": "affine_harmonic", "a": 0.0, "b": 1.0, "j": 1},
            ],
            "domain": {"sphere": 2},
        }
    )
    centered, energy = inequality_service.check_sphere_vector(field, 2, sphere_budget)

    assert centered.theorem_id == TheoremId.SPHERE_VECTOR
    assert energy.theorem_id == TheoremId.SPHERE_VECTOR_ENERGY
    assert centered.holds
    assert energy.holds
    # |a(f)|^2 = (n^2/4)|tau|^2
    assert centered.identity_residual <= 10 * centered.identity_error + 1e-12
    assert centered.identity_residual == energy.identity_residual


def test_verify_dispatch(
    inequality_service: InequalityService,
    budget: QuadratureBudget,
    sphere_budget: QuadratureBudget,
    gaussian: FieldSpec,
):
    (report,) = inequality_service.verify(TheoremId.HPW, gaussian, budget=budget)
    assert report.n == 3

    with pytest.raises(FieldEvaluationError, match=r"ckn_complex needs params"):
        inequality_service.verify(TheoremId.CKN_COMPLEX, gaussian, budget=budget)

    with pytest.raises(FieldEvaluationError, match=r"ckn_general needs general_params"):
        inequality_service.verify(TheoremId.CKN_GENERAL, gaussian, budget=budget)

    with pytest.raises(FieldEvaluationError, match=r"needs a vector field"):
        inequality_service.verify(TheoremId.SPHERE_VECTOR, gaussian, budget=sphere_budget)


def test_propagated_tolerance():
    """Each input's error moves the slack independently; the shifts add in quadrature."""

    def slack_of(values: list[float]) -> float:
        return values[0] * values[1] - values[2] ** 2

    tolerance = propagated_tolerance(slack_of, [2.0, 3.0, 1.0], [0.1, 0.0, 0.1], factor=10.0)
    # d slack = 0.3 from the first input and -(1.1^2 - 1) = -0.21 from the third
    assert tolerance == pytest.approx(10 * math.hypot(0.3, 0.21))


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_hpw_is_scale_invariant(inequality_service: InequalityService, budget: QuadratureBudget, lam: float):
    """Both sides scale as lam^(-2n) under f -> f(lam x), so lhs/rhs is unchanged."""
    chirp = {"family": "chirped_gaussian", "k": [1.0, 0.0, 0.0], "b": 0.5}
    base = inequality_service.check_hpw(3, parse_field({**chirp, "domain": {"euclidean": 3}}), budget)
    dilated = parse_field({"family": "dilation", "field": chirp, "lam": lam, "domain": {"euclidean": 3}})
    report = inequality_service.check_hpw(3, dilated, budget)

    assert report.lhs / report.rhs_improved == pytest.approx(base.lhs / base.rhs_improved, rel=1e-6)
    assert report.lhs == pytest.approx(base.lhs * lam**-6, rel=1e-6)


def test_complex_field_matches_its_vector_form(inequality_service: InequalityService, budget: QuadratureBudget):
    """u + iv and (u, v) have the same amplitude, gradient energy and phase derivative."""
    u = {"family": "gaussian", "b": 0.5}
    v = {"family": "custom", "expr": "(mul (coord 1) (exp (mul -0.5 (add (pow (coord 1) 2) (pow (coord 2) 2)))))"}
    params = CknParams(n=3, p=3.0, q=1.0)
    as_complex = parse_field({"family": "complex", "real": u, "imag": v, "domain": {"euclidean": 3}})
    as_vector = parse_field({"family": "vector", "components": [u, v], "domain": {"euclidean": 3}})

    complex_report = inequality_service.check_ckn_complex(params, as_complex, budget)
    vector_report = inequality_service.check_ckn_vector(params, as_vector, budget)
    assert complex_report.cov_term > 0
    for name in ("lhs", "rhs_classical", "cov_term"):
        assert getattr(vector_report, name) == pytest.approx(getattr(complex_report, name), rel=1e-10)


def test_real_field_has_no_covariance(
    inequality_service: InequalityService, budget: QuadratureBudget, gaussian: FieldSpec
):
    report = inequality_service.check_ckn_complex(CknParams(n=3, p=3.0, q=1.0), gaussian, budget)
    assert report.cov_term == 0.0
    assert report.rhs_improved == report.rhs_classical
