from fastapi import FastAPI
from fastapi.middleware.gzip import GZipMiddleware
from dotenv import load_dotenv

from app.core.config import settings
from app.api.v1.api import api_router
from app.utils.audit import configure_logging

# Load environment variables
load_dotenv()

configure_logging(settings.LOG_LEVEL, settings.AUDIT_LOG)

api_description = """
## Hand Primitives - trajectory generation for in-hand manipulation

Fingertip and object trajectories are built as non-negative combinations of
motion primitives learned from demonstrations.

### Endpoints

- `GET /api/v1/dictionaries/current` - metadata of the loaded dictionary
- `POST /api/v1/trajectories/generate` - trajectory between an initial and a final frame
- `POST /api/v1/verification/verify` - reachability, collision and contact checks

Coordinates are palm-frame meters; orientations are roll, pitch, yaw in radians.
Training and batch evaluation run from the `hand-primitives` command line.
"""

app = FastAPI(
    title="Hand Primitives API",
    description=api_description,
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc"
)

# Trajectories are 100 frames of 21 floats
app.add_middleware(GZipMiddleware, minimum_size=500)

# Include API router
app.include_router(api_router, prefix="/api/v1")


@app.get("/")
async def root():
    return {"message": "Hand Primitives API is running"}


@app.get("/health")
async def health_check():
    return {"status": "healthy"}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
