from collections.abc import Iterator
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class QuadratureBudget(BaseModel):
    model_config = ConfigDict(frozen=True)

    radial_nodes: int = Field(default=64, ge=2, le=1024, description="Radial nodes at the coarsest level")
    angular_nodes: int = Field(default=32, ge=1, le=512, description="Nodes per angle at the coarsest level")
    refine_levels: int = Field(default=1, ge=0, le=3, description="Number of node doublings")
    tolerance: float | None = Field(default=None, gt=0, description="Error estimate above which results are flagged")

    def at_level(self, level: int) -> tuple[int, int]:
        """Radial and angular node counts after ``level`` doublings."""
        return self.radial_nodes * 2**level, self.angular_nodes * 2**level


class IntegralEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float = Field(..., description="Value on the finest grid")
    error_estimate: float = Field(..., ge=0, description="|fine - coarse| (never below the rounding bound)")
    grid_levels: list[int] = Field(..., description="Refinement levels evaluated")
    flagged: bool = Field(default=False, description="error_estimate exceeded the requested tolerance")


class QuadratureGrid(BaseModel):
    """Product rule held as factors; euclidean nodes are formed one block of radial shells at a time.

    Sphere-product grids keep their nodes in ``angular_points``; euclidean grids pair every radial node with every
    angular direction (``radial_points`` x ``angular_points``).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dim: int
    kind: Literal["euclidean-spherical-radial", "sphere-product"]
    radial_nodes: int
    angular_nodes: int
    angular_points: np.ndarray
    angular_weights: np.ndarray
    radial_points: np.ndarray | None = None
    radial_weights: np.ndarray | None = None

    @property
    def size(self) -> int:
        radial = 1 if self.radial_points is None else len(self.radial_points)
        return radial * len(self.angular_points)

    @property
    def total_weight(self) -> float:
        if self.radial_weights is None:
            return math.fsum(self.angular_weights)
        return math.fsum(self.radial_weights) * math.fsum(self.angular_weights)

    def chunks(self, chunk_size: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield (points, weights) blocks of roughly ``chunk_size`` nodes in a fixed order."""
        if self.radial_points is None or self.radial_weights is None:
            for start in range(0, len(self.angular_points), chunk_size):
                stop = start + chunk_size
                yield self.angular_points[start:stop], self.angular_weights[start:stop]
            return

        shells = max(1, chunk_size // len(self.angular_points))
        for start in range(0, len(self.radial_points), shells):
            radii = self.radial_points[start : start + shells]
            weights = self.radial_weights[start : start + shells]
            points = (radii[:, None, None] * self.angular_points[None, :, :]).reshape(-1, self.dim)
            yield points, (weights[:, None] * self.angular_weights[None, :]).reshape(-1)
