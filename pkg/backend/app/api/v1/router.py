"""
Aggregate all v1 sub-routers.
"""
from fastapi import APIRouter

from app.api.v1 import experiments

api_router = APIRouter()

api_router.include_router(experiments.router, prefix="/experiments", tags=["experiments"])
