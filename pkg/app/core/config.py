from pydantic_settings import BaseSettings
from typing import Optional
import math
from pathlib import Path


class Settings(BaseSettings):
    # Logging
    LOG_LEVEL: str = "INFO"
    AUDIT_LOG: bool = True

    # Storage
    DATA_DIR: str = "./data"
    # Dictionary served by the HTTP API
    DICTIONARY_PATH: str = "./data/dictionary.json"
    WORKSPACE_PATH: Optional[str] = None

    DEFAULT_OBJECT: str = "cube"
    DEFAULT_SEED: int = 0

    # Sampling and segmentation (100 Hz, 1 s primitives)
    SAMPLE_RATE_HZ: float = 100.0
    N_STEPS: int = 100

    # Preprocessing
    MAX_GAP_S: float = 0.2
    CUTOFF_HZ: float = 20.0
    FILTER_ORDER: int = 2
    POSITION_OFFSET: float = 0.8
    ORIENTATION_OFFSET: float = 2 * math.pi

    # NMF training
    N_PRIMITIVES: int = 200
    NMF_MAX_ITERS: int = 500
    NMF_REL_TOL: float = 1e-6

    # Trajectory generation
    GEN_LAMBDA: float = 1.0
    V_MAX: float = 0.5
    # Endpoint residual the velocity bounds may cost before a request counts as infeasible
    INFEASIBLE_RESIDUAL: float = 0.01
    KKT_TOL: float = 1e-6

    # Verification (meters)
    TAU: float = 0.01
    D_MIN: float = 0.005
    WORKSPACE_MARGIN: float = 0.005
    SURFACE_RESOLUTION: float = 0.002

    # Synthetic demonstrations
    SYNTH_NOISE_STD: float = 0.0005

    class Config:
        # Use absolute path to .env file
        env_file = Path(__file__).parent.parent.parent / ".env"
        env_file_encoding = 'utf-8'
        extra = "ignore"

    @property
    def dt(self) -> float:
        return 1.0 / self.SAMPLE_RATE_HZ


settings = Settings()
