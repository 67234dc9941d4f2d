import asyncio

from fastapi import APIRouter

from app.dependency import SearchServiceDep
from app.dto.api import SweepRequest
from app.dto.search import SearchProblem, SearchResult, SweepRow

router = APIRouter()


@router.post("/sweep")
async def sweep(request: SweepRequest, search_service: SearchServiceDep) -> list[SweepRow]:
    return await asyncio.to_thread(
        search_service.sweep, request.theorem_id, request.grid, request.field, request.budget
    )


@router.post("/search")
async def search(problem: SearchProblem, search_service: SearchServiceDep) -> SearchResult:
    return await asyncio.to_thread(search_service.minimize_ratio, problem)
