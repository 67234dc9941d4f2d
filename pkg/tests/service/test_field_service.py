import math
from pathlib import Path

import numpy as np
import pytest

from app.dto.field import HomogeneousExtension, Point, parse_field
from app.errors import FieldEvaluationError
from app.service.field_service import FieldService


@pytest.fixture
def field_service() -> FieldService:
    return FieldService()


@pytest.fixture
def chirped_path(tmp_path: Path) -> Path:
    """Chirped Gaussian FieldSpec on R^3 written to disk."""
    path = tmp_path / "chirped.json"
    path.write_text('{"family": "chirped_gaussian", "k": [2.0, 0.0, 0.0], "domain": {"euclidean": 3}}')
    return path


async def test_load_field(field_service: FieldService, chirped_path: Path):
    field = await field_service.load_field(chirped_path)
    assert field.codomain == "complex"
    assert field.k == (2.0, 0.0, 0.0)


async def test_load_field_missing_file(field_service: FieldService, tmp_path: Path):
    with pytest.raises(FileNotFoundError, match=r"Field file not found"):
        await field_service.load_field(tmp_path / "nope.json")


def test_gaussian_jet(field_service: FieldService):
    """exp(-b|x - c|^2) has gradient -2b(x - c) f and Hessian (4b^2 (x-c)(x-c)^T - 2b I) f."""
    field = parse_field({"family": "gaussian", "b": 0.5, "center": [1.0, 0.0], "domain": {"euclidean": 2}})
    jet = field_service.eval_jet2(field, Point(coords=(2.0, 1.0)))

    value = math.exp(-1.0)
    assert jet.value[0] == pytest.approx(value)
    np.testing.assert_allclose(jet.grad[0], [-value, -value], rtol=1e-14)
    np.testing.assert_allclose(jet.hess[0], [[0.0, value], [value, 0.0]], atol=1e-15)


def test_chirped_gaussian_is_complex(field_service: FieldService):
    field = parse_field({"family": "chirped_gaussian", "k": [2.0, 0.0], "b": 0.5, "domain": {"euclidean": 2}})
    jet = field_service.eval_jet1(field, Point(coords=(0.5, 0.0)))

    envelope = math.exp(-0.125)
    assert jet.value[0] == pytest.approx(envelope * complex(math.cos(1.0), math.sin(1.0)))
    # d/dx1 = (-x1 + 2i) f
    assert jet.grad[0, 0] == pytest.approx((-0.5 + 2j) * jet.value[0])


def test_vector_sample_shapes(field_service: FieldService):
    field = parse_field(
        {
            "family": "vector",
            "components": [
                {"family": "gaussian"},
                {"family": "radial_rational"},
                {"family": "custom", "expr": "(coord 2)"},
            ],
            "domain": {"euclidean": 2},
        }
    )
    points = np.array([[0.1, 0.2], [0.3, -0.4], [1.0, 1.0], [-2.0, 0.5]])
    sample = field_service.sample(field, points, order=2)

    assert sample.values.shape == (4, 3)
    assert sample.grads.shape == (4, 3, 2)
    assert sample.hessians.shape == (4, 3, 2, 2)
    np.testing.assert_array_equal(sample.values[:, 2], points[:, 1])
    np.testing.assert_allclose(sample.amplitude_sq, np.sum(sample.values**2, axis=1))


def test_radial_families(field_service: FieldService):
    """|x|^a exp(-b|x|^2) and (1 + b|x|^c)^(-a) at |x| = 2."""
    point = Point(coords=(0.0, 2.0, 0.0))
    poly = parse_field({"family": "radial_poly_gaussian", "a": 2.0, "b": 1.0, "domain": {"euclidean": 3}})
    rational = parse_field({"family": "radial_rational", "a": 1.0, "b": 1.0, "c": 2.0, "domain": {"euclidean": 3}})

    assert field_service.eval_jet1(poly, point).value[0] == pytest.approx(4.0 * math.exp(-4.0))
    rational_jet = field_service.eval_jet1(rational, point)
    assert rational_jet.value[0] == pytest.approx(0.2)
    # d/dr (1 + r^2)^-1 = -2r / (1 + r^2)^2
    assert rational_jet.grad[0, 1] == pytest.approx(-4.0 / 25.0)


def test_polar_and_dilation(field_service: FieldService):
    polar = parse_field(
        {
            "family": "polar",
            "amplitude": {"family": "gaussian"},
            "phase": {"family": "custom", "expr": "(mul 3 (coord 1))"},
            "domain": {"euclidean": 1},
        }
    )
    jet = field_service.eval_jet1(polar, Point(coords=(0.4,)))
    assert abs(jet.value[0]) == pytest.approx(math.exp(-0.08))
    assert jet.grad[0, 0] == pytest.approx((-0.4 + 3j) * jet.value[0])

    dilated = parse_field(
        {"family": "dilation", "field": {"family": "gaussian"}, "lam": 2.0, "domain": {"euclidean": 1}}
    )
    dilated_jet = field_service.eval_jet1(dilated, Point(coords=(0.5,)))
    assert dilated_jet.value[0] == pytest.approx(math.exp(-0.5))
    assert dilated_jet.grad[0, 0] == pytest.approx(-2.0 * math.exp(-0.5))


def test_homogeneous_extension_is_tangent(field_service: FieldService):
    """The gradient of f(x/|x|) at a unit vector is orthogonal to it."""
    expr = "(add (coord 0) (mul (coord 1) (coord 2)))"
    field = parse_field({"family": "custom", "expr": expr, "domain": {"sphere": 2}})
    extension = field_service.restrict_to_sphere(field)
    assert isinstance(extension, HomogeneousExtension)
    assert field_service.restrict_to_sphere(extension) is extension

    points = np.array([[0.0, 0.6, 0.8], [1.0, 0.0, 0.0], [0.48, 0.6, 0.64]])
    sample = field_service.sample(extension, points)
    np.testing.assert_allclose(np.einsum("nd,nd->n", sample.grads[:, 0, :], points), 0.0, atol=1e-14)

    with pytest.raises(FieldEvaluationError, match=r"undefined at the origin"):
        field_service.sample(extension, np.zeros((1, 3)))


def test_sample_errors(field_service: FieldService):
    field = parse_field({"family": "gaussian", "domain": {"euclidean": 2}})
    with pytest.raises(FieldEvaluationError, match=r"points have dimension 3"):
        field_service.sample(field, np.zeros((1, 3)))

    with pytest.raises(FieldEvaluationError, match=r"needs a field on a sphere domain"):
        field_service.restrict_to_sphere(field)

    singular = parse_field({"family": "custom", "expr": "(pow (coord 1) -1)", "domain": {"euclidean": 1}})
    with pytest.raises(FieldEvaluationError, match=r"non-finite field value or derivative at x = \(0\)"):
        field_service.sample(singular, np.array([[1.0], [0.0]]))


@pytest.mark.parametrize("expr", ["(mul (exp 800) (coord 1))", "(add (pow -2 0.5) (coord 2))", "(pow 0 -1)"])
def test_constant_subexpressions_out_of_range(field_service: FieldService, expr: str):
    """Constants that overflow or leave the real domain surface as evaluation errors naming the point."""
    field = parse_field({"family": "custom", "expr": expr, "domain": {"euclidean": 2}})
    with pytest.raises(FieldEvaluationError, match=r"non-finite field value or derivative at x = \(0.5, 0.25\)"):
        field_service.sample(field, np.array([[0.5, 0.25]]))


def test_constant_subexpressions(field_service: FieldService):
    field = parse_field(
        {"family": "custom", "expr": "(mul (pow 4 0.5) (exp 0) (cos 0) (coord 1))", "domain": {"euclidean": 1}}
    )
    jet = field_service.eval_jet2(field, Point(coords=(1.5,)))
    assert jet.value[0] == 3.0
    assert jet.grad[0, 0] == 2.0
    assert jet.hess[0, 0, 0] == 0.0


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_restriction_is_scale_invariant(field_service: FieldService, lam: float):
    """F(lam x) = F(x) for the degree-0 extension of a sphere field."""
    field = parse_field(
        {
            "family": "complex",
            "real": {"family": "custom", "expr": "(add (coord 0) (mul (coord 1) (coord 2)))"},
            "imag": {"family": "custom", "expr": "(sin (mul 3 (coord 2)))"},
            "domain": {"sphere": 2},
        }
    )
    extension = field_service.restrict_to_sphere(field)
    points = np.random.default_rng(4).standard_normal((50, 3))
    points /= np.linalg.norm(points, axis=1)[:, None]

    on_sphere = field_service.sample(extension, points).values
    scaled = field_service.sample(extension, lam * points).values
    np.testing.assert_allclose(scaled, on_sphere, rtol=0, atol=1e-14)


def test_gradient_field(field_service: FieldService):
    """The vector field grad u built from a second-order sample."""
    u = parse_field({"family": "custom", "expr": "(mul (coord 1) (coord 1) (coord 2))", "domain": {"euclidean": 2}})
    sample = field_service.sample(u, np.array([[1.0, 2.0]]), order=2).gradient_field()

    assert sample.codomain == "vector"
    np.testing.assert_allclose(sample.values[0], [4.0, 1.0])
    np.testing.assert_allclose(sample.grads[0], [[4.0, 2.0], [2.0, 0.0]])

    with pytest.raises(FieldEvaluationError, match=r"needs a second-order sample"):
        field_service.sample(u, np.array([[1.0, 2.0]])).gradient_field()
