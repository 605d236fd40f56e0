from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List, Tuple
import numpy as np

from app.core.config import settings
from app.core.types import (
    FINGERS,
    N_FEATURES,
    N_FINGERS,
    POSITION_MASK,
    FINGERTIP_SLICE,
    OBJECT_POSITION_SLICE,
    OBJECT_ORIENTATION_SLICE,
    Representation,
)

Vec3 = Tuple[float, float, float]


def _frozen_array(value, ndim: int) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.ndim != ndim:
        raise ValueError(f"expected a {ndim}-D array, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError("array contains non-finite values")
    array.setflags(write=False)
    return array


class OffsetSpec(BaseModel):
    position_offset: float = Field(default_factory=lambda: settings.POSITION_OFFSET, gt=0, description="Meters added to every position feature")
    orientation_offset: float = Field(default_factory=lambda: settings.ORIENTATION_OFFSET, gt=0, description="Radians added to every orientation feature")

    class Config:
        frozen = True

    def pattern(self) -> np.ndarray:
        """Per-feature offset for one frame (21,)."""
        return np.where(POSITION_MASK, self.position_offset, self.orientation_offset)


class Frame(BaseModel):
    """One time step P(k): five fingertip positions plus the object pose, palm frame."""
    fingertips: Tuple[Vec3, Vec3, Vec3, Vec3, Vec3] = Field(..., description="Thumb, index, middle, ring, little (m)")
    object_position: Vec3 = Field(..., description="Object position (m)")
    object_orientation: Vec3 = Field(..., description="Object roll, pitch, yaw (rad)")

    class Config:
        frozen = True

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            np.asarray(self.fingertips, dtype=float).reshape(-1),
            np.asarray(self.object_position, dtype=float),
            np.asarray(self.object_orientation, dtype=float),
        ])

    @classmethod
    def from_vector(cls, vector) -> "Frame":
        v = np.asarray(vector, dtype=float).reshape(-1)
        if v.shape[0] != N_FEATURES:
            raise ValueError(f"a frame has {N_FEATURES} features, got {v.shape[0]}")
        tips = v[FINGERTIP_SLICE].reshape(N_FINGERS, 3)
        return cls(
            fingertips=tuple(tuple(float(c) for c in tip) for tip in tips),
            object_position=tuple(float(c) for c in v[OBJECT_POSITION_SLICE]),
            object_orientation=tuple(float(c) for c in v[OBJECT_ORIENTATION_SLICE]),
        )

    def fingertip(self, finger: str) -> np.ndarray:
        return np.asarray(self.fingertips[FINGERS.index(finger)], dtype=float)


class Trajectory(BaseModel):
    """N consecutive frames sampled every dt seconds; features is (N, 21), frame-major."""
    features: np.ndarray
    dt: float = Field(default_factory=lambda: settings.dt, gt=0)
    representation: Representation = Representation.PHYSICAL

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("features", mode="before")
    @classmethod
    def _check_features(cls, value):
        array = _frozen_array(value, ndim=2)
        if array.shape[1] != N_FEATURES:
            raise ValueError(f"each frame needs {N_FEATURES} features, got {array.shape[1]}")
        if array.shape[0] < 2:
            raise ValueError("a trajectory needs at least 2 frames")
        return array

    @model_validator(mode="after")
    def _check_offset_range(self):
        if self.representation == Representation.OFFSET and np.any(self.features < 0):
            raise ValueError("offset representation requires every feature >= 0")
        return self

    @property
    def n_steps(self) -> int:
        return self.features.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    @property
    def fingertips(self) -> np.ndarray:
        """(N, 5, 3) fingertip positions."""
        return self.features[:, FINGERTIP_SLICE].reshape(self.n_steps, N_FINGERS, 3)

    @property
    def object_position(self) -> np.ndarray:
        return self.features[:, OBJECT_POSITION_SLICE]

    @property
    def object_orientation(self) -> np.ndarray:
        return self.features[:, OBJECT_ORIENTATION_SLICE]

    def frame(self, k: int) -> Frame:
        """Frame at 0-based step k (negative indices allowed)."""
        return Frame.from_vector(self.features[k])

    @property
    def frames(self) -> List[Frame]:
        return [Frame.from_vector(row) for row in self.features]
