from pydantic import BaseModel, Field, model_validator
from typing import List, Literal, Union
from typing_extensions import Annotated

from app.core.config import settings
from app.schemas.trajectory import Vec3
from app.schemas.verification import ObjectModel

MAX_ROTATION_DEG = 25.0
MAX_TRANSLATION_M = 0.12

FingerName = Literal["thumb", "index", "middle", "ring", "little"]


class RotateAction(BaseModel):
    kind: Literal["rotate"] = "rotate"
    axis: Literal["x", "y"]
    degrees: float = Field(..., ge=-MAX_ROTATION_DEG, le=MAX_ROTATION_DEG)
    duration: float = Field(1.0, gt=0, description="Seconds")


class TranslateAction(BaseModel):
    kind: Literal["translate"] = "translate"
    axis: Literal["y"] = "y"
    meters: float = Field(..., ge=-MAX_TRANSLATION_M, le=MAX_TRANSLATION_M)
    duration: float = Field(1.0, gt=0, description="Seconds")


Action = Annotated[Union[RotateAction, TranslateAction], Field(discriminator="kind")]


class GaitEvent(BaseModel):
    """One finger lifts off at `time`, moves to a new contact point and lands after `duration`."""
    time: float = Field(..., ge=0)
    finger: FingerName
    lift_height: float = Field(0.03, gt=0)
    duration: float = Field(0.4, gt=0)
    # Tangential shift of the contact point along the surface (m)
    shift: float = Field(0.004, ge=0)

    @property
    def end(self) -> float:
        return self.time + self.duration


class ManipulationScript(BaseModel):
    object: ObjectModel = Field(default_factory=ObjectModel)
    actions: List[Action] = Field(default_factory=list)
    gait_events: List[GaitEvent] = Field(default_factory=list)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    noise_std: float = Field(default_factory=lambda: settings.SYNTH_NOISE_STD, ge=0)
    rest_before: float = Field(0.0, ge=0)
    rest_after: float = Field(0.0, ge=0)
    object_center: Vec3 = (0.0, 0.0, 0.07)
    contact_jitter: float = Field(0.003, ge=0)
    sample_rate_hz: float = Field(default_factory=lambda: settings.SAMPLE_RATE_HZ, gt=0)

    @model_validator(mode="after")
    def _check_ranges(self):
        total = {"x": 0.0, "y": 0.0}
        shift = 0.0
        for action in self.actions:
            if isinstance(action, RotateAction):
                total[action.axis] += action.degrees
            else:
                shift += action.meters
        if any(abs(angle) > MAX_ROTATION_DEG for angle in total.values()):
            raise ValueError(f"accumulated rotation must stay within ±{MAX_ROTATION_DEG}°")
        if abs(shift) > MAX_TRANSLATION_M:
            raise ValueError(f"accumulated translation must stay within ±{MAX_TRANSLATION_M} m")
        for event in self.gait_events:
            if event.end > self.duration + 1e-9:
                raise ValueError(f"gait event for {event.finger} at {event.time}s ends after the script")
        return self

    @property
    def duration(self) -> float:
        return self.rest_before + sum(a.duration for a in self.actions) + self.rest_after
