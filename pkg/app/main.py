from collections.abc import AsyncIterator
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from loguru import logger

from app.api import api_router
from app.config import config
from app.errors import CknLabError
from app.service import QuadratureService


@asynccontextmanager
async def lifespan(app: FastAPI) -> AsyncIterator[None]:  # noqa
    logger.info(f"Starting up ({config.threads} quadrature threads)...")
    yield
    QuadratureService.clear_cache()
    logger.info("Shutting down...")


def create_app() -> FastAPI:
    app = FastAPI(title="ckn-lab", lifespan=lifespan)

    # Add CORS middleware
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],  # In production, specify actual origins
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(CknLabError)
    async def ckn_lab_error_handler(request: Request, exc: CknLabError) -> JSONResponse:  # noqa
        logger.warning(f"{request.url.path}: {exc}")
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    async def health_check() -> dict[str, str]:
        return {"status": "healthy", "environment": config.environment}

    # Include API router
    app.include_router(api_router)

    return app


app = create_app()
