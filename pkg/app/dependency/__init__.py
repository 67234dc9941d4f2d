from .service import InequalityServiceDep, SearchServiceDep, StatsServiceDep

__all__ = ["InequalityServiceDep", "SearchServiceDep", "StatsServiceDep"]
