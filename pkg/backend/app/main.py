"""
FastAPI application entry point.
"""
import sentry_sdk
from fastapi import FastAPI

from app import __version__
from app.api.v1.router import api_router
from app.config import settings

if settings.SENTRY_DSN:
    sentry_sdk.init(dsn=settings.SENTRY_DSN, traces_sample_rate=0.2)


app = FastAPI(
    title="Subdiffusion Lab API",
    version=__version__,
    description="Variable-order subdiffusion experiments as background jobs",
    docs_url="/api/docs" if settings.DEBUG else None,
    redoc_url=None,
)

app.include_router(api_router, prefix="/api/v1")


@app.get("/health", tags=["health"])
async def health():
    return {"status": "ok"}
