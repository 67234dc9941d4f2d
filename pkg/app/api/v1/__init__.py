from fastapi import APIRouter

from .search import router as search_router
from .verify import router as verify_router

v1_router = APIRouter(prefix="/v1")
v1_router.include_router(verify_router)
v1_router.include_router(search_router)
