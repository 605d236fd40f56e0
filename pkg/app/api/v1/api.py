from fastapi import APIRouter
from app.api.v1.endpoints import dictionaries, trajectories, verification

api_router = APIRouter()

api_router.include_router(dictionaries.router, prefix="/dictionaries", tags=["dictionaries"])
api_router.include_router(trajectories.router, prefix="/trajectories", tags=["trajectories"])
api_router.include_router(verification.router, prefix="/verification", tags=["verification"])
