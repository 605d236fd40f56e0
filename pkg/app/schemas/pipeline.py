from pydantic import BaseModel, Field
from typing import List, Literal, Optional
import yaml

from app.core.config import settings
from app.core.types import ObjectShape
from app.schemas.evaluation import ErrorStat


class PreprocessSection(BaseModel):
    cutoff_hz: float = Field(default_factory=lambda: settings.CUTOFF_HZ, gt=0, lt=50)
    max_gap_s: float = Field(default_factory=lambda: settings.MAX_GAP_S, gt=0)
    position_offset: float = Field(default_factory=lambda: settings.POSITION_OFFSET, gt=0)
    orientation_offset: float = Field(default_factory=lambda: settings.ORIENTATION_OFFSET, gt=0)

    class Config:
        extra = "forbid"


class NmfSection(BaseModel):
    n_primitives: int = Field(default_factory=lambda: settings.N_PRIMITIVES, ge=1)
    max_iters: int = Field(default_factory=lambda: settings.NMF_MAX_ITERS, ge=1)
    rel_tol: float = Field(default_factory=lambda: settings.NMF_REL_TOL, gt=0)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    update_rule: Literal["multiplicative", "hals"] = "multiplicative"

    class Config:
        extra = "forbid"


class GenerationSection(BaseModel):
    lambda_: float = Field(default_factory=lambda: settings.GEN_LAMBDA, gt=0, alias="lambda")
    v_max: float = Field(default_factory=lambda: settings.V_MAX, gt=0)
    infeasible_residual: float = Field(default_factory=lambda: settings.INFEASIBLE_RESIDUAL, gt=0)
    rotation_range_deg: List[float] = Field(default_factory=lambda: [15.0, 20.0], min_length=2, max_length=2)
    translation_range_m: List[float] = Field(default_factory=lambda: [0.05, 0.10], min_length=2, max_length=2)
    requests_per_family: int = Field(7, ge=1)

    class Config:
        extra = "forbid"
        populate_by_name = True


class VerificationSection(BaseModel):
    tau: float = Field(default_factory=lambda: settings.TAU, gt=0)
    d_min: float = Field(default_factory=lambda: settings.D_MIN, gt=0)
    workspace_margin: float = Field(default_factory=lambda: settings.WORKSPACE_MARGIN, ge=0)
    surface_resolution: float = Field(default_factory=lambda: settings.SURFACE_RESOLUTION, gt=0)

    class Config:
        extra = "forbid"


class SynthSection(BaseModel):
    minutes: float = Field(36.0, gt=0, description="Total synthetic demonstration time per object")
    trials: int = Field(6, ge=1, description="Recordings the minutes are split into")
    split: List[int] = Field(default_factory=lambda: [5, 1], min_length=2, max_length=2)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    noise_std: float = Field(default_factory=lambda: settings.SYNTH_NOISE_STD, ge=0)

    class Config:
        extra = "forbid"


class PathsSection(BaseModel):
    out_dir: str = Field(default_factory=lambda: settings.DATA_DIR)
    # Existing recordings to use instead of synthesizing; per-object subdirectories
    demo_dir: Optional[str] = None

    class Config:
        extra = "forbid"


class PipelineConfig(BaseModel):
    objects: List[ObjectShape] = Field(default_factory=lambda: [ObjectShape(settings.DEFAULT_OBJECT)], min_length=1)
    preprocess: PreprocessSection = Field(default_factory=PreprocessSection)
    nmf: NmfSection = Field(default_factory=NmfSection)
    generation: GenerationSection = Field(default_factory=GenerationSection)
    verification: VerificationSection = Field(default_factory=VerificationSection)
    synth: SynthSection = Field(default_factory=SynthSection)
    paths: PathsSection = Field(default_factory=PathsSection)

    class Config:
        extra = "forbid"

    @classmethod
    def from_yaml(cls, path: str) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle) or {}
        return cls.model_validate(data)


class ObjectSummary(BaseModel):
    object_label: str
    trajectories: int
    infeasible: int = 0
    reachability_pass_rate: float
    contact_pass_rate: float
    collision_steps: int
    gaiting_trajectories: int
    violations: int
    endpoint_errors: List[ErrorStat] = Field(default_factory=list)


class PipelineSummary(BaseModel):
    out_dir: str
    manifest: str
    objects: List[ObjectSummary] = Field(default_factory=list)
