from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List
import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.types import N_FEATURES, RECORDING_COLUMNS, TIME_COLUMN, FEATURE_COLUMNS, PALM_COLUMNS
from app.schemas.trajectory import OffsetSpec

# Allowed relative deviation of a sample interval from the nominal one
UNIFORMITY_TOLERANCE = 0.01


class Recording(BaseModel):
    """
    A demonstration time series: fingertips, object pose and palm pose per sample.

    Missing samples are NaN cells; `gaps` exposes them as a per-channel mask.
    """
    samples: pd.DataFrame
    sample_rate_hz: float = Field(default_factory=lambda: settings.SAMPLE_RATE_HZ, gt=0)
    palm_frame: bool = False
    filtered: bool = False
    source: str = ""

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("samples", mode="before")
    @classmethod
    def _check_columns(cls, value):
        frame = pd.DataFrame(value)
        missing = [c for c in RECORDING_COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"recording is missing columns: {missing}")
        frame = frame[RECORDING_COLUMNS].astype(float).reset_index(drop=True)
        if frame[TIME_COLUMN].isna().any():
            raise ValueError("timestamps cannot be missing")
        return frame

    @model_validator(mode="after")
    def _check_timestamps(self):
        t = self.samples[TIME_COLUMN].to_numpy()
        if t.shape[0] >= 2:
            steps = np.diff(t)
            if np.any(steps <= 0):
                raise ValueError("timestamps must be strictly increasing")
            nominal = 1.0 / self.sample_rate_hz
            if np.max(np.abs(steps - nominal)) > UNIFORMITY_TOLERANCE * nominal:
                raise ValueError(f"timestamps must be uniform at {self.sample_rate_hz} Hz to within 1%")
        return self

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def gaps(self) -> pd.DataFrame:
        return self.samples[FEATURE_COLUMNS + PALM_COLUMNS].isna()

    @property
    def has_gaps(self) -> bool:
        return bool(self.gaps.to_numpy().any())

    def features(self) -> np.ndarray:
        """(T, 21) feature block."""
        return self.samples[FEATURE_COLUMNS].to_numpy(dtype=float)

    def replace(self, samples: pd.DataFrame, **updates) -> "Recording":
        fields = {
            "sample_rate_hz": self.sample_rate_hz,
            "palm_frame": self.palm_frame,
            "filtered": self.filtered,
            "source": self.source,
        }
        fields.update(updates)
        return Recording(samples=samples, **fields)


class DemoMatrix(BaseModel):
    """Training matrix V (21N x m): one offset, flattened 1-second segment per column."""
    v: np.ndarray
    n_steps: int = Field(default_factory=lambda: settings.N_STEPS, ge=2)
    offsets: OffsetSpec = Field(default_factory=OffsetSpec)
    segment_sources: List[str] = Field(default_factory=list)

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("v", mode="before")
    @classmethod
    def _check_v(cls, value):
        array = np.array(value, dtype=float)
        if array.ndim != 2:
            raise ValueError(f"V must be 2-D, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("V contains non-finite values")
        if np.any(array < 0):
            raise ValueError("every element of V must be >= 0")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_shape(self):
        if self.v.shape[0] != N_FEATURES * self.n_steps:
            raise ValueError(f"V has {self.v.shape[0]} rows, expected {N_FEATURES * self.n_steps}")
        if self.segment_sources and len(self.segment_sources) != self.v.shape[1]:
            raise ValueError("one segment source per column is required")
        return self

    @property
    def n(self) -> int:
        return self.v.shape[0]

    @property
    def m(self) -> int:
        return self.v.shape[1]
