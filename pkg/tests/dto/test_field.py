from pydantic import ValidationError
import pytest

from app.dto.expression import Apply, Coord, Number, coordinates, parse_expression
from app.dto.field import (
    ChirpedGaussian,
    ComplexPair,
    Domain,
    GaussianReal,
    HomogeneousExtension,
    VectorOfFields,
    parse_field,
)
from app.errors import ExpressionError, FieldEvaluationError


def test_domain_kinds():
    """Test that a domain names exactly one space and reports its ambient dimension."""
    euclidean = Domain(euclidean=3)
    assert euclidean.kind == "euclidean"
    assert euclidean.ambient_dim == 3
    assert euclidean.first_coordinate == 1

    sphere = Domain(sphere=2)
    assert sphere.kind == "sphere"
    assert sphere.ambient_dim == 3
    assert sphere.first_coordinate == 0

    with pytest.raises(ValidationError, match=r"exactly one of"):
        Domain(euclidean=3, sphere=2)

    with pytest.raises(ValidationError, match=r"exactly one of"):
        Domain()


def test_parse_field_requires_outer_domain():
    """Test that the outermost field must declare its domain."""
    with pytest.raises(FieldEvaluationError, match=r"must declare a domain"):
        parse_field({"family": "gaussian"})

    field = parse_field('{"family": "gaussian", "b": 0.5, "domain": {"euclidean": 3}}')
    assert isinstance(field, GaussianReal)
    assert field.codomain == "real"


def test_codomain_and_width():
    """Test codomain and component count of composite fields."""
    chirped = parse_field({"family": "chirped_gaussian", "k": [2.0, 0.0, 0.0], "domain": {"euclidean": 3}})
    assert isinstance(chirped, ChirpedGaussian)
    assert chirped.codomain == "complex"
    assert chirped.width == 2

    vector = parse_field(
        {
            "family": "vector",
            "components": [{"family": "gaussian"}, {"family": "radial_rational"}, {"family": "gaussian", "b": 2}],
            "domain": {"euclidean": 2},
        }
    )
    assert isinstance(vector, VectorOfFields)
    assert vector.codomain == "vector"
    assert vector.width == 3

    pair = parse_field(
        {
            "family": "complex",
            "real": {"family": "affine_harmonic", "a": 1.0, "j": 0},
            "imag": {"family": "affine_harmonic", "b": 1.0, "j": 1},
            "domain": {"sphere": 2},
        }
    )
    assert isinstance(pair, ComplexPair)
    assert pair.codomain == "complex"


def test_dimension_checks():
    """Test that family parameters must fit the declared domain."""
    with pytest.raises(ValidationError, match=r"k has 2 entries but the domain has dimension 3"):
        parse_field({"family": "chirped_gaussian", "k": [1.0, 0.0], "domain": {"euclidean": 3}})

    with pytest.raises(ValidationError, match=r"coordinate index 0 outside 1..3"):
        parse_field({"family": "affine_harmonic", "j": 0, "domain": {"euclidean": 3}})

    with pytest.raises(ValidationError, match=r"coordinate index 4 outside 0..3"):
        parse_field({"family": "custom", "expr": "(mul 2 (coord 4))", "domain": {"sphere": 3}})

    with pytest.raises(ValidationError, match=r"needs a sphere domain"):
        parse_field({"family": "homogeneous", "field": {"family": "gaussian"}, "domain": {"euclidean": 3}})


def test_composite_parts_must_be_real():
    """Test that complex and polar parts reject non-real children."""
    with pytest.raises(ValidationError, match=r"real must be a real field"):
        parse_field(
            {
                "family": "complex",
                "real": {"family": "chirped_gaussian", "k": [1.0, 0.0]},
                "imag": {"family": "gaussian"},
                "domain": {"euclidean": 2},
            }
        )


def test_family_parameter_bounds():
    """Test field parameter validation."""
    with pytest.raises(ValidationError, match=r"Input should be greater than 0"):
        parse_field({"family": "gaussian", "b": 0.0, "domain": {"euclidean": 2}})

    with pytest.raises(ValidationError, match=r"Input should be greater than 0"):
        parse_field({"family": "dilation", "field": {"family": "gaussian"}, "lam": -1.0, "domain": {"euclidean": 2}})

    with pytest.raises(ValidationError):
        parse_field({"family": "bessel", "domain": {"euclidean": 2}})


def test_homogeneous_extension_wraps_sphere_field():
    field = parse_field(
        {"family": "homogeneous", "field": {"family": "affine_harmonic", "j": 2}, "domain": {"sphere": 2}}
    )
    assert isinstance(field, HomogeneousExtension)
    assert field.codomain == "real"


def test_parse_expression():
    """Test the custom-expression parser."""
    expr = parse_expression("(add 1 (mul -0.5 (coord 1)) (pow (coord 2) 2))")
    assert isinstance(expr, Apply)
    assert expr.op == "add"
    assert expr.args[0] == Number(1.0)
    assert coordinates(expr) == {1, 2}
    assert parse_expression("(coord 3)") == Coord(3)


@pytest.mark.parametrize(
    ("text", "message"),
    [
        ("", r"Empty expression"),
        ("(log (coord 1))", r"Unknown operator 'log'"),
        ("(exp (coord 1) (coord 2))", r"exp takes 1 arguments"),
        ("(pow (coord 1) (coord 2))", r"pow exponent must be a numeric literal"),
        ("(add 1 2", r"Missing '\)' after add"),
        ("(coord x)", r"coord index must be a non-negative integer"),
        ("(exp 1) 2", r"Trailing tokens"),
        ("(mul inf 2)", r"Non-finite literal"),
    ],
)
def test_parse_expression_errors(text: str, message: str):
    with pytest.raises(ExpressionError, match=message):
        parse_expression(text)


def test_custom_field_rejects_bad_expression():
    with pytest.raises(ValidationError, match=r"Unknown operator"):
        parse_field({"family": "custom", "expr": "(tan (coord 1))", "domain": {"euclidean": 2}})
