from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Dict, List, Literal, Optional
import numpy as np

from app.core.config import settings
from app.core.types import FINGERS, N_FEATURES
from app.schemas.dictionary import ActivationVector
from app.schemas.trajectory import Frame, Trajectory


class VelocityBounds(BaseModel):
    """Symmetric per-axis fingertip speed limits: -v_max <= dp/dt <= v_max."""
    v_max: float = Field(default_factory=lambda: settings.V_MAX, gt=0, description="m/s, every fingertip axis")
    per_finger: Dict[str, float] = Field(default_factory=dict, description="Per-finger v_max overrides (m/s)")
    enabled: bool = True

    class Config:
        frozen = True

    @field_validator("per_finger")
    @classmethod
    def _check_overrides(cls, value):
        for finger, limit in value.items():
            if finger not in FINGERS:
                raise ValueError(f"unknown finger '{finger}'")
            if limit <= 0:
                raise ValueError(f"v_max override for {finger} must be > 0")
        return value

    def limits(self) -> np.ndarray:
        """Speed limit for each of the 15 fingertip coordinates."""
        per_finger = [self.per_finger.get(finger, self.v_max) for finger in FINGERS]
        return np.repeat(np.asarray(per_finger, dtype=float), 3)


class GenerationRequest(BaseModel):
    initial: Frame
    final: Frame
    lambda_: float = Field(default_factory=lambda: settings.GEN_LAMBDA, gt=0, alias="lambda")
    velocity_bounds: VelocityBounds = Field(default_factory=VelocityBounds)
    # None disables the infeasibility check
    infeasible_residual: Optional[float] = Field(default_factory=lambda: settings.INFEASIBLE_RESIDUAL, gt=0)

    class Config:
        frozen = True
        populate_by_name = True


class SolveStats(BaseModel):
    status: Literal["optimal", "infeasible"] = "optimal"
    iterations: int = 0
    objective: float = 0.0
    kkt_residual: float = 0.0
    # False when kkt_residual exceeds the configured tolerance
    kkt_ok: bool = True
    active_velocity_constraints: int = 0
    velocity_scale: float = 1.0
    wall_time_ms: float = 0.0


class GenerationResult(BaseModel):
    h: ActivationVector
    trajectory: Trajectory
    initial_residual: np.ndarray
    final_residual: np.ndarray
    solve_stats: SolveStats

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @model_validator(mode="after")
    def _check_residuals(self):
        for residual in (self.initial_residual, self.final_residual):
            if np.asarray(residual).shape != (N_FEATURES,):
                raise ValueError(f"endpoint residuals are {N_FEATURES}-vectors")
        return self

    @property
    def endpoint_residuals(self):
        return self.initial_residual, self.final_residual

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(np.concatenate([self.initial_residual, self.final_residual])))


class TrajectoryResponse(BaseModel):
    status: Literal["optimal", "infeasible"]
    dt: float
    frames: List[Frame]
    h: List[float]
    initial_residual: List[float]
    final_residual: List[float]
    residual_norm: float
    solve_stats: SolveStats

    @classmethod
    def from_result(cls, res: GenerationResult) -> "TrajectoryResponse":
        return cls(
            status=res.solve_stats.status,
            dt=res.trajectory.dt,
            frames=res.trajectory.frames,
            h=res.h.h.tolist(),
            initial_residual=np.asarray(res.initial_residual).tolist(),
            final_residual=np.asarray(res.final_residual).tolist(),
            residual_norm=res.residual_norm,
            solve_stats=res.solve_stats,
        )
