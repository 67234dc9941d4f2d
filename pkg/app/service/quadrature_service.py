from collections import OrderedDict
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
from threading import Lock
from typing import ClassVar

from loguru import logger
import numpy as np
from scipy.special import roots_jacobi

from app.config import config
from app.dto.quadrature import IntegralEstimate, QuadratureBudget, QuadratureGrid
from app.errors import QuadratureError

# points (N, d) -> values (N,) or (N, k)
type Integrand = Callable[[np.ndarray], np.ndarray]

# (kind, dim, radial nodes, angular nodes, weight exponent)
type GridKey = tuple[str, int, int, int, float]

MAX_EUCLIDEAN_DIM = 6
MAX_SPHERE_DIM = 5


@dataclass(frozen=True)
class QuadratureSum:
    """Weighted sums of every integrand column over one grid."""

    values: np.ndarray
    magnitudes: np.ndarray
    size: int

    @property
    def rounding(self) -> np.ndarray:
        """Pairwise-summation rounding bound, eps * log2(N) * sum(w |g|)."""
        depth = max(1, math.ceil(math.log2(max(self.size, 2))))
        return np.finfo(float).eps * depth * self.magnitudes


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in R^dim."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def _sphere_rule_size(m: int, nodes: int) -> int:
    if m == 0:
        return 2
    return nodes**m


def _sphere_rule(m: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized product rule on S^m in R^{m+1}.

    x_0 = cos(theta_1), x_1 = sin(theta_1) cos(theta_2), ...; each polar angle uses Gauss-Jacobi in cos(theta)
    with the sin^{m-i-1} Jacobian as its weight, the last angle a uniform trapezoid.
    """
    if m == 0:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    if m == 1:
        phi = 2.0 * np.pi * np.arange(nodes) / nodes
        return np.column_stack([np.cos(phi), np.sin(phi)]), np.full(nodes, 1.0 / nodes)

    inner_points, inner_weights = _sphere_rule(m - 1, nodes)
    half = (m - 2) / 2
    u, w = roots_jacobi(nodes, half, half)
    sin_theta = np.sqrt(np.clip(1.0 - u * u, 0.0, None))

    count = len(inner_points)
    points = np.concatenate(
        [np.repeat(u, count)[:, None], np.repeat(sin_theta, count)[:, None] * np.tile(inner_points, (nodes, 1))],
        axis=1,
    )
    weights = np.repeat(w, count) * np.tile(inner_weights, nodes)
    return points, weights


class QuadratureService:
    """Deterministic product-rule integration over R^n (weight |x|^-s) and S^n (normalized measure)."""

    # Grids are shared between service instances
    _cache: ClassVar[OrderedDict[GridKey, QuadratureGrid]] = OrderedDict()
    _max_cache_size: ClassVar[int] = config.grid_cache_size
    _cache_lock: ClassVar[Lock] = Lock()

    threads: int
    chunk_size: int
    max_nodes: int

    def __init__(
        self, threads: int | None = None, chunk_size: int | None = None, max_nodes: int | None = None
    ) -> None:
        self.threads = threads or config.threads
        self.chunk_size = chunk_size or config.chunk_size
        self.max_nodes = max_nodes or config.max_grid_nodes

    def _check_size(self, size: int, where: str) -> None:
        if size > self.max_nodes:
            raise QuadratureError(
                f"{where} grid needs {size} nodes, above the limit of {self.max_nodes}; "
                "lower angular_nodes or refine_levels"
            )

    def sphere_grid(self, n: int, angular_nodes: int) -> QuadratureGrid:
        """Product rule on S^n whose weights sum to 1."""
        if not 1 <= n <= MAX_SPHERE_DIM:
            raise QuadratureError(f"sphere dimension must be in 1..{MAX_SPHERE_DIM}, got {n}")

        self._check_size(_sphere_rule_size(n, angular_nodes), f"S^{n}")

        key: GridKey = ("sphere", n, 0, angular_nodes, 0.0)
        cached = self._get_from_cache(key)
        if cached is not None:
            return cached

        points, weights = _sphere_rule(n, angular_nodes)
        grid = QuadratureGrid(
            dim=n + 1,
            kind="sphere-product",
            radial_nodes=0,
            angular_nodes=angular_nodes,
            angular_points=points,
            angular_weights=weights / math.fsum(weights),
        )
        logger.debug(f"Built S^{n} grid with {grid.size} nodes")
        self._put_in_cache(key, grid)
        return grid

    def rn_grid(self, n: int, radial_nodes: int, angular_nodes: int, s: float = 0.0) -> QuadratureGrid:
        """Spherical-radial rule for the integral of g(x) |x|^-s over R^n.

        The radius r = t / (1 - t) is integrated by Gauss-Jacobi in t with the factor t^(n-1-s) as weight, so the
        singular part of r^(n-1-s) is exact and the origin is never sampled.
        """
        if not 1 <= n <= MAX_EUCLIDEAN_DIM:
            raise QuadratureError(f"dimension must be in 1..{MAX_EUCLIDEAN_DIM}, got {n}")
        if not s < n:
            raise QuadratureError(f"weight exponent s = {s} must satisfy s < n = {n}")

        self._check_size(radial_nodes * _sphere_rule_size(n - 1, angular_nodes), f"R^{n}")

        key: GridKey = ("euclidean", n, radial_nodes, angular_nodes, float(s))
        cached = self._get_from_cache(key)
        if cached is not None:
            return cached

        beta = n - 1 - s
        u, w = roots_jacobi(radial_nodes, 0.0, beta)
        t = (1.0 + u) / 2.0
        radii = t / (1.0 - t)
        radial_weights = w * 2.0 ** (-beta - 1.0) * (1.0 - t) ** (-beta - 2.0)

        directions, direction_weights = _sphere_rule(n - 1, angular_nodes)
        direction_weights = direction_weights / math.fsum(direction_weights) * sphere_area(n)

        grid = QuadratureGrid(
            dim=n,
            kind="euclidean-spherical-radial",
            radial_nodes=radial_nodes,
            angular_nodes=angular_nodes,
            angular_points=directions,
            angular_weights=direction_weights,
            radial_points=radii,
            radial_weights=radial_weights,
        )
        logger.debug(f"Built R^{n} grid (s = {s}) with {grid.size} nodes")
        self._put_in_cache(key, grid)
        return grid

    def sum_grid(self, grid: QuadratureGrid, g: Integrand) -> QuadratureSum:
        """Apply the rule to every column of ``g``; chunks run on the thread pool and combine in grid order."""

        def partial(chunk: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
            points, weights = chunk
            values = np.asarray(g(points), dtype=float)
            if values.ndim == 1:
                values = values[:, None]
            if values.shape[0] != len(points):
                raise QuadratureError(f"integrand returned {values.shape[0]} rows for {len(points)} nodes")

            finite = np.all(np.isfinite(values), axis=1)
            if not finite.all():
                node = points[int(np.argmin(finite))]
                raise QuadratureError(f"non-finite integrand at node {np.array2string(node, precision=17)}")

            weighted = weights[:, None] * values
            return np.sum(weighted, axis=0), np.sum(np.abs(weighted), axis=0)

        chunks = list(grid.chunks(self.chunk_size))
        if self.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=min(self.threads, len(chunks))) as pool:
                partials = list(pool.map(partial, chunks))
        else:
            partials = [partial(chunk) for chunk in chunks]

        columns = partials[0][0].shape[0]
        values = np.array([math.fsum(part[0][k] for part in partials) for k in range(columns)])
        magnitudes = np.array([math.fsum(part[1][k] for part in partials) for k in range(columns)])
        return QuadratureSum(values=values, magnitudes=magnitudes, size=grid.size)

    def combine(self, sums: list[QuadratureSum], budget: QuadratureBudget) -> list[IntegralEstimate]:
        """Turn per-level sums (coarse to fine) into estimates; the error is the last doubling's change."""
        finest = sums[-1]
        change = np.abs(finest.values - sums[-2].values) if len(sums) > 1 else np.zeros_like(finest.values)
        errors = np.maximum(change, finest.rounding)
        levels = list(range(len(sums)))

        estimates = []
        for value, error in zip(finest.values, errors, strict=True):
            flagged = budget.tolerance is not None and bool(error > budget.tolerance)
            if flagged:
                logger.warning(f"Quadrature error estimate {error:.3e} exceeds tolerance {budget.tolerance:.3e}")
            estimates.append(
                IntegralEstimate(value=float(value), error_estimate=float(error), grid_levels=levels, flagged=flagged)
            )
        return estimates

    def rn_grids(self, n: int, s: float, budget: QuadratureBudget) -> list[QuadratureGrid]:
        return [self.rn_grid(n, *budget.at_level(level), s) for level in range(budget.refine_levels + 1)]

    def sphere_grids(self, n: int, budget: QuadratureBudget) -> list[QuadratureGrid]:
        return [self.sphere_grid(n, budget.at_level(level)[1]) for level in range(budget.refine_levels + 1)]

    def integrate_weighted_rn_many(
        self, g: Integrand, s: float, n: int, budget: QuadratureBudget | None = None
    ) -> list[IntegralEstimate]:
        budget = budget or config.default_budget()
        return self.combine([self.sum_grid(grid, g) for grid in self.rn_grids(n, s, budget)], budget)

    def integrate_weighted_rn(
        self, g: Integrand, s: float, n: int, budget: QuadratureBudget | None = None
    ) -> IntegralEstimate:
        """Integral of g(x) |x|^-s over R^n; requires s < n."""
        return self.integrate_weighted_rn_many(g, s, n, budget)[0]

    def integrate_rn(self, g: Integrand, n: int, budget: QuadratureBudget | None = None) -> IntegralEstimate:
        return self.integrate_weighted_rn(g, 0.0, n, budget)

    def integrate_sn_many(self, g: Integrand, n: int, budget: QuadratureBudget | None = None) -> list[IntegralEstimate]:
        budget = budget or config.default_budget()
        return self.combine([self.sum_grid(grid, g) for grid in self.sphere_grids(n, budget)], budget)

    def integrate_sn(self, g: Integrand, n: int, budget: QuadratureBudget | None = None) -> IntegralEstimate:
        """Integral over S^n against the normalized surface measure."""
        return self.integrate_sn_many(g, n, budget)[0]

    @classmethod
    def clear_cache(cls) -> None:
        """Clear all cached grids."""
        with cls._cache_lock:
            cls._cache.clear()

    @classmethod
    def _get_from_cache(cls, key: GridKey) -> QuadratureGrid | None:
        """Get cached grid and move it to the most recently used end."""
        with cls._cache_lock:
            if key in cls._cache:
                cls._cache.move_to_end(key)
                return cls._cache[key]
        return None

    @classmethod
    def _put_in_cache(cls, key: GridKey, grid: QuadratureGrid) -> None:
        with cls._cache_lock:
            cls._cache[key] = grid
            while len(cls._cache) > cls._max_cache_size:
                cls._cache.popitem(last=False)
