from typing import Annotated

from fastapi import Depends

from app.service import InequalityService, SearchService, StatsService


async def get_inequality_service() -> InequalityService:
    return InequalityService()


InequalityServiceDep = Annotated[InequalityService, Depends(get_inequality_service)]


async def get_stats_service() -> StatsService:
    return StatsService()


StatsServiceDep = Annotated[StatsService, Depends(get_stats_service)]


async def get_search_service() -> SearchService:
    return SearchService()


SearchServiceDep = Annotated[SearchService, Depends(get_search_service)]
