import os
from typing import TYPE_CHECKING, Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

if TYPE_CHECKING:
    from app.dto.quadrature import QuadratureBudget


class Config(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="CKN_LAB_")

    environment: Literal["local", "production"] = "local"
    log_level: str = "INFO"

    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)

    # Quadrature defaults (nodes per radial line / per angle)
    radial_nodes: int = 64
    angular_nodes: int = 32
    refine_levels: int = 1
    chunk_size: int = 32768
    grid_cache_size: int = 64
    max_grid_nodes: int = 2**22

    # Verification tolerances
    tolerance_factor: float = 10.0
    amplitude_floor: float = 1e-12
    sphere_tolerance: float = 1e-12

    seed: int = 42

    def default_budget(self) -> "QuadratureBudget":
        """Quadrature budget built from the configured node counts"""
        from app.dto.quadrature import QuadratureBudget

        return QuadratureBudget(
            radial_nodes=self.radial_nodes,
            angular_nodes=self.angular_nodes,
            refine_levels=self.refine_levels,
        )


config = Config()
