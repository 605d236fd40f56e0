"""
Offset codec and flattening between trajectories and dictionary columns.

flatten stacks frames 1 .. N into one 21N vector (frame-major); the
offset representation shifts positions by +position_offset and angles by
+orientation_offset so every feature is non-negative for factorization.
"""
import logging

import numpy as np

from app.core.exceptions import DimensionMismatchError, OffsetInsufficientError, ValidationError
from app.core.types import FEATURE_COLUMNS, N_FEATURES, Representation
from app.schemas.dictionary import ActivationVector, Dictionary
from app.schemas.trajectory import Frame, OffsetSpec, Trajectory

logger = logging.getLogger(__name__)


def flatten(t: Trajectory) -> np.ndarray:
    return t.features.reshape(-1).copy()


def unflatten(vector, dt: float, representation: Representation = Representation.PHYSICAL) -> Trajectory:
    v = np.asarray(vector, dtype=float).reshape(-1)
    if v.shape[0] % N_FEATURES:
        raise DimensionMismatchError(f"vector length {v.shape[0]} is not a multiple of {N_FEATURES}")
    return Trajectory(features=v.reshape(-1, N_FEATURES), dt=dt, representation=representation)


def _check_non_negative(features: np.ndarray, where: str) -> None:
    if np.any(features < 0):
        step, feature = np.argwhere(features < 0)[0]
        raise OffsetInsufficientError(
            f"{where}: offset leaves negative features",
            details=f"step {step}, feature {FEATURE_COLUMNS[feature]} = {features[step, feature]:.6g}",
        )


def offset_vector(frame: Frame, s: OffsetSpec) -> np.ndarray:
    """Offset representation of a single frame (21,)."""
    v = frame.to_vector() + s.pattern()
    _check_non_negative(v[None, :], "frame")
    return v


def apply_offset(t: Trajectory, s: OffsetSpec) -> Trajectory:
    if t.representation != Representation.PHYSICAL:
        raise ValidationError("apply_offset expects a physical trajectory")
    shifted = t.features + s.pattern()
    _check_non_negative(shifted, "trajectory")
    return Trajectory(features=shifted, dt=t.dt, representation=Representation.OFFSET)


def remove_offset(t: Trajectory, s: OffsetSpec) -> Trajectory:
    if t.representation != Representation.OFFSET:
        raise ValidationError("remove_offset expects an offset trajectory")
    return Trajectory(features=t.features - s.pattern(), dt=t.dt, representation=Representation.PHYSICAL)


def combine(w: np.ndarray, h) -> np.ndarray:
    """W·h with a dimension check; works for any non-negative W."""
    h = np.asarray(h.h if isinstance(h, ActivationVector) else h, dtype=float)
    if h.ndim != 1 or h.shape[0] != w.shape[1]:
        raise DimensionMismatchError(f"activation length {h.shape[0] if h.ndim else 0} does not match {w.shape[1]} primitives")
    return w @ h


def reconstruct(d: Dictionary, h) -> Trajectory:
    """unflatten(W·h) in offset representation; callers de-offset with remove_offset."""
    return unflatten(combine(d.w, h), dt=d.dt, representation=Representation.OFFSET)
