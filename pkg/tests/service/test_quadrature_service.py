import math

import numpy as np
import pytest

from app.dto.quadrature import QuadratureBudget
from app.errors import QuadratureError
from app.service.quadrature_service import QuadratureService, sphere_area


@pytest.fixture
def quadrature_service() -> QuadratureService:
    """Service with a clean grid cache."""
    QuadratureService.clear_cache()
    return QuadratureService(threads=2, chunk_size=4096)


@pytest.fixture
def budget() -> QuadratureBudget:
    return QuadratureBudget(radial_nodes=64, angular_nodes=8, refine_levels=1)


def _gaussian(points: np.ndarray) -> np.ndarray:
    return np.exp(-np.sum(points * points, axis=1))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_gaussian_integral(quadrature_service: QuadratureService, budget: QuadratureBudget, n: int):
    """Int exp(-|x|^2) over R^n is pi^(n/2)."""
    estimate = quadrature_service.integrate_rn(_gaussian, n, budget)
    assert estimate.value == pytest.approx(math.pi ** (n / 2), rel=1e-8)
    assert estimate.grid_levels == [0, 1]
    assert estimate.error_estimate >= 0
    assert not estimate.flagged


def test_singular_weight(quadrature_service: QuadratureService, budget: QuadratureBudget):
    """Int |x|^-1 exp(-|x|^2) over R^3 is 2 pi; negative s puts the weight on the numerator."""
    singular = quadrature_service.integrate_weighted_rn(_gaussian, 1.0, 3, budget)
    assert singular.value == pytest.approx(2 * math.pi, rel=1e-8)

    # Int |x|^2 exp(-|x|^2) = (3/2) pi^(3/2)
    moment = quadrature_service.integrate_weighted_rn(_gaussian, -2.0, 3, budget)
    assert moment.value == pytest.approx(1.5 * math.pi**1.5, rel=1e-8)


def test_weight_exponent_must_stay_below_dimension(quadrature_service: QuadratureService):
    with pytest.raises(QuadratureError, match=r"weight exponent s = 3.0 must satisfy s < n = 3"):
        quadrature_service.rn_grid(3, 16, 4, s=3.0)

    with pytest.raises(QuadratureError, match=r"dimension must be in 1..6"):
        quadrature_service.rn_grid(7, 16, 4)


def test_sphere_grid_is_normalized(quadrature_service: QuadratureService):
    for n in (1, 2, 3, 4, 5):
        grid = quadrature_service.sphere_grid(n, 6)
        assert grid.total_weight == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(np.linalg.norm(grid.angular_points, axis=1), 1.0, atol=1e-14)

    with pytest.raises(QuadratureError, match=r"sphere dimension must be in 1..5"):
        quadrature_service.sphere_grid(6, 4)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_sphere_moments(quadrature_service: QuadratureService, budget: QuadratureBudget, n: int):
    """Int x_0^2 = 1/(n+1) and Int x_0^4 = 3/((n+1)(n+3)) against the normalized measure."""
    second, fourth = quadrature_service.integrate_sn_many(
        lambda x: np.column_stack([x[:, 0] ** 2, x[:, 0] ** 4]), n, budget
    )
    assert second.value == pytest.approx(1 / (n + 1), abs=1e-13)
    assert fourth.value == pytest.approx(3 / ((n + 1) * (n + 3)), abs=1e-13)


def test_rn_grid_weights(quadrature_service: QuadratureService):
    """The angular factor of a Euclidean grid carries the area of S^(n-1)."""
    grid = quadrature_service.rn_grid(3, 8, 6)
    assert math.fsum(grid.angular_weights) == pytest.approx(sphere_area(3))
    assert grid.size == 8 * len(grid.angular_points)
    assert np.all(grid.radial_points > 0)
    assert sum(len(points) for points, _ in grid.chunks(100)) == grid.size


def test_results_do_not_depend_on_threads(budget: QuadratureBudget):
    """Chunk sums combine in grid order, so the thread count never changes the bits."""
    serial = QuadratureService(threads=1, chunk_size=1024).integrate_rn(_gaussian, 3, budget)
    parallel = QuadratureService(threads=4, chunk_size=1024).integrate_rn(_gaussian, 3, budget)
    assert serial.value == parallel.value


def test_grid_cache(quadrature_service: QuadratureService):
    first = quadrature_service.sphere_grid(2, 8)
    assert quadrature_service.sphere_grid(2, 8) is first

    QuadratureService.clear_cache()
    assert quadrature_service.sphere_grid(2, 8) is not first


def test_non_finite_integrand(quadrature_service: QuadratureService, budget: QuadratureBudget):
    with pytest.raises(QuadratureError, match=r"non-finite integrand"):
        quadrature_service.integrate_sn(lambda x: 1.0 / (x[:, 0] - x[:, 0]), 2, budget)


def test_tolerance_flags_estimate(quadrature_service: QuadratureService):
    """An estimate whose error exceeds the requested tolerance is flagged."""
    budget = QuadratureBudget(radial_nodes=4, angular_nodes=2, refine_levels=1, tolerance=1e-12)
    estimate = quadrature_service.integrate_rn(_gaussian, 2, budget)
    assert estimate.flagged
    assert estimate.error_estimate > 1e-12


def test_grid_size_limit(quadrature_service: QuadratureService):
    """64 nodes per angle on S^5 would be 64^5 ~ 1e9 nodes; the grid is refused before it is built."""
    with pytest.raises(QuadratureError, match=r"S\^5 grid needs 1073741824 nodes, above the limit"):
        quadrature_service.sphere_grid(5, 64)

    with pytest.raises(QuadratureError, match=r"R\^6 grid needs 68719476736 nodes"):
        quadrature_service.rn_grid(6, 64, 64)

    small = QuadratureService(threads=1, max_nodes=1000)
    assert small.rn_grid(3, 10, 10).size == 1000
    with pytest.raises(QuadratureError, match=r"lower angular_nodes or refine_levels"):
        small.rn_grid(3, 11, 10)


def test_grid_chunks_cover_every_node_once(quadrature_service: QuadratureService):
    sphere = quadrature_service.sphere_grid(2, 6)
    points = np.concatenate([block for block, _ in sphere.chunks(10)])
    np.testing.assert_array_equal(points, sphere.angular_points)

    euclidean = quadrature_service.rn_grid(3, 8, 6)
    blocks = list(euclidean.chunks(100))
    assert len(blocks) > 1
    assert sum(len(block) for block, _ in blocks) == euclidean.size
    assert math.fsum(np.concatenate([weights for _, weights in blocks])) == pytest.approx(euclidean.total_weight)
