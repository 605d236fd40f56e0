from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List, Literal, Optional
import numpy as np

from app.core.config import settings
from app.core.types import N_FEATURES, FINGERTIP_SLICE
from app.schemas.trajectory import OffsetSpec


def _non_negative_array(value, ndim: int) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.ndim != ndim:
        raise ValueError(f"expected a {ndim}-D array, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError("array contains non-finite values")
    if np.any(array < 0):
        raise ValueError("array must be entrywise non-negative")
    array.setflags(write=False)
    return array


class Provenance(BaseModel):
    object_label: str = "unknown"
    seed: Optional[int] = None
    iterations: int = 0
    final_residual: Optional[float] = None
    update_rule: str = "multiplicative"
    n_columns: Optional[int] = None
    source: Optional[str] = None


class Dictionary(BaseModel):
    """Non-negative dictionary W (21N x l); each column is one motion primitive."""
    w: np.ndarray
    n_steps: int = Field(..., ge=2)
    n_primitives: int = Field(..., ge=1)
    dt: float = Field(default_factory=lambda: settings.dt, gt=0)
    offsets: OffsetSpec = Field(default_factory=OffsetSpec)
    provenance: Provenance = Field(default_factory=Provenance)

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("w", mode="before")
    @classmethod
    def _check_w(cls, value):
        return _non_negative_array(value, ndim=2)

    @model_validator(mode="after")
    def _check_shape(self):
        rows, cols = self.w.shape
        if rows != N_FEATURES * self.n_steps:
            raise ValueError(f"W has {rows} rows, expected {N_FEATURES} x {self.n_steps}")
        if cols != self.n_primitives:
            raise ValueError(f"W has {cols} columns, expected {self.n_primitives}")
        return self

    def block(self, k: int) -> np.ndarray:
        """The 21 rows of frame k, 1-based (k = 1 .. N)."""
        if not 1 <= k <= self.n_steps:
            raise IndexError(f"frame index {k} outside 1..{self.n_steps}")
        return self.w[N_FEATURES * (k - 1): N_FEATURES * k]

    def fingertip_velocity_matrix(self) -> np.ndarray:
        """Rows ([W(k+1) - W(k)] / dt) restricted to the 15 fingertip rows, k = 1 .. N-1."""
        blocks = self.w.reshape(self.n_steps, N_FEATURES, self.n_primitives)[:, FINGERTIP_SLICE, :]
        diffs = np.diff(blocks, axis=0) / self.dt
        return diffs.reshape(-1, self.n_primitives)


class ActivationVector(BaseModel):
    h: np.ndarray

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("h", mode="before")
    @classmethod
    def _check_h(cls, value):
        return _non_negative_array(value, ndim=1)

    def __len__(self) -> int:
        return self.h.shape[0]


class NmfConfig(BaseModel):
    n_primitives: int = Field(default_factory=lambda: settings.N_PRIMITIVES, ge=1)
    max_iters: int = Field(default_factory=lambda: settings.NMF_MAX_ITERS, ge=1)
    rel_tol: float = Field(default_factory=lambda: settings.NMF_REL_TOL, gt=0)
    rng_seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    # None scales the uniform init to the data magnitude
    init_scale: Optional[float] = Field(None, gt=0)
    update_rule: Literal["multiplicative", "hals"] = "multiplicative"

    class Config:
        extra = "forbid"


class NmfResult(BaseModel):
    dictionary: Dictionary
    activations: np.ndarray
    objective_trace: List[float]
    converged: bool = False

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("activations", mode="before")
    @classmethod
    def _check_activations(cls, value):
        return _non_negative_array(value, ndim=2)

    @model_validator(mode="after")
    def _check_rank(self):
        if self.activations.shape[0] != self.dictionary.n_primitives:
            raise ValueError("H must have one row per primitive")
        return self


class DictionaryInfo(BaseModel):
    """Dictionary metadata without the matrix."""
    n_steps: int
    n_primitives: int
    dt: float
    offsets: OffsetSpec
    provenance: Provenance

    @classmethod
    def from_dictionary(cls, d: Dictionary) -> "DictionaryInfo":
        return cls(n_steps=d.n_steps, n_primitives=d.n_primitives, dt=d.dt, offsets=d.offsets, provenance=d.provenance)
