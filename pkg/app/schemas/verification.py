from pydantic import BaseModel, Field, model_validator
from typing import Dict, List, Literal, Optional
import numpy as np

from app.core.config import settings
from app.core.types import FINGERS, ObjectShape
from app.schemas.trajectory import Frame, Vec3


class FingerBox(BaseModel):
    """Axis-aligned reachable region of one fingertip (meters, inclusive)."""
    lower: Vec3
    upper: Vec3

    @model_validator(mode="after")
    def _check_bounds(self):
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box lower bound must be below the upper bound on every axis")
        return self

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.all((points >= np.asarray(self.lower)) & (points <= np.asarray(self.upper)), axis=-1)


class Workspace(BaseModel):
    boxes: Dict[str, FingerBox]
    margin: float = Field(default_factory=lambda: settings.WORKSPACE_MARGIN, ge=0)

    @model_validator(mode="after")
    def _check_fingers(self):
        missing = [f for f in FINGERS if f not in self.boxes]
        if missing:
            raise ValueError(f"workspace has no box for: {missing}")
        return self


class ObjectModel(BaseModel):
    shape: ObjectShape = ObjectShape.CUBE
    edge: float = Field(0.05, gt=0, description="Cube edge (m)")
    diameter: float = Field(0.05, gt=0, description="Cylinder diameter (m)")
    height: float = Field(0.05, gt=0, description="Cylinder height (m)")
    surface_resolution: float = Field(default_factory=lambda: settings.SURFACE_RESOLUTION, gt=0)

    class Config:
        frozen = True

    @classmethod
    def named(cls, name: str, **overrides) -> "ObjectModel":
        return cls(shape=ObjectShape(name), **overrides)


class Violation(BaseModel):
    step: int
    kind: Literal["reachability", "collision", "contact"]
    finger: Optional[str] = None
    value: Optional[float] = None
    detail: str = ""


class GaitTransition(BaseModel):
    step: int
    old: int
    new: int


class ConstraintReport(BaseModel):
    dt: float
    object_shape: ObjectShape
    tau: float
    d_min: float
    reachability_ok: List[List[bool]]
    min_pairwise_distance: List[float]
    collision_flags: List[bool]
    contact_count: List[int]
    contact_set: List[List[str]]
    violations: List[Violation] = Field(default_factory=list)
    gaiting_detected: bool = False
    transitions: List[GaitTransition] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_consistency(self):
        n = len(self.contact_count)
        lengths = {len(self.reachability_ok), len(self.min_pairwise_distance), len(self.collision_flags), len(self.contact_set)}
        if lengths != {n}:
            raise ValueError("per-step fields must all have one entry per step")
        if any(count != len(members) for count, members in zip(self.contact_count, self.contact_set)):
            raise ValueError("contact_count must equal the size of contact_set")
        return self

    @property
    def n_steps(self) -> int:
        return len(self.contact_count)

    @property
    def passed(self) -> bool:
        return not self.violations

    def violation_count(self, kind: str) -> int:
        return sum(1 for v in self.violations if v.kind == kind)


class VerificationRequest(BaseModel):
    frames: List[Frame] = Field(..., min_length=2)
    dt: float = Field(default_factory=lambda: settings.dt, gt=0)
    object: ObjectShape = Field(default_factory=lambda: ObjectShape(settings.DEFAULT_OBJECT))
    tau: float = Field(default_factory=lambda: settings.TAU, ge=0)
    d_min: float = Field(default_factory=lambda: settings.D_MIN, gt=0)
