from .field_service import FieldService
from .inequality_service import InequalityService
from .phase_service import PhaseService
from .quadrature_service import QuadratureService
from .search_service import SearchService
from .selftest_service import SelftestService
from .sphere_service import SphereService
from .stats_service import StatsService

__all__ = [
    "FieldService",
    "InequalityService",
    "PhaseService",
    "QuadratureService",
    "SearchService",
    "SelftestService",
    "SphereService",
    "StatsService",
]
