import asyncio

from fastapi import APIRouter

from app.dependency import InequalityServiceDep, StatsServiceDep
from app.dto.api import StatsRequest, VerifyRequest, VerifyResponse
from app.dto.sphere import SphereStats

router = APIRouter()


@router.post("/verify")
async def verify(request: VerifyRequest, inequality_service: InequalityServiceDep) -> VerifyResponse:
    reports = await asyncio.to_thread(
        inequality_service.verify,
        request.theorem_id,
        request.field,
        request.params,
        request.general_params,
        request.n,
        request.budget,
    )
    return VerifyResponse(reports=reports)


@router.post("/stats")
async def stats(request: StatsRequest, stats_service: StatsServiceDep) -> SphereStats:
    return await asyncio.to_thread(stats_service.compute_stats, request.field, request.n, request.budget)
