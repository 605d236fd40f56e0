"""
Rotation helpers and the minimum-jerk time profile.

Orientations are (roll, pitch, yaw) triples applied as intrinsic z-y'-x''
rotations: yaw about z first, then pitch about the new y, then roll about the
new x. Every producer and consumer in the package goes through these helpers.
"""
import numpy as np
from scipy.spatial.transform import Rotation

EULER_SEQUENCE = "ZYX"

AXIS_VECTORS = {
    "x": np.array([1.0, 0.0, 0.0]),
    "y": np.array([0.0, 1.0, 0.0]),
    "z": np.array([0.0, 0.0, 1.0]),
}


def rotation_from_rpy(rpy) -> Rotation:
    """Build a Rotation (single or stacked) from (..., 3) roll/pitch/yaw arrays."""
    rpy = np.asarray(rpy, dtype=float)
    return Rotation.from_euler(EULER_SEQUENCE, rpy[..., ::-1])


def rpy_from_rotation(rotation: Rotation) -> np.ndarray:
    """Inverse of rotation_from_rpy; returns (..., 3) roll/pitch/yaw."""
    return rotation.as_euler(EULER_SEQUENCE)[..., ::-1]


def axis_rotation(axis: str, angle) -> Rotation:
    """Rotation(s) by angle (radians, scalar or 1-D) about a palm-frame axis."""
    angle = np.asarray(angle, dtype=float)
    return Rotation.from_rotvec(angle[..., None] * AXIS_VECTORS[axis])


def transform_points(points: np.ndarray, position, rpy) -> np.ndarray:
    """Map object-frame points (P, 3) into the parent frame for one pose."""
    return rotation_from_rpy(rpy).apply(points) + np.asarray(position, dtype=float)


def minimum_jerk(s) -> np.ndarray:
    """Normalized minimum-jerk position profile, s in [0, 1] -> [0, 1]."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


def minimum_jerk_velocity(s) -> np.ndarray:
    """Derivative of minimum_jerk with respect to s; peaks at 1.875 for s = 0.5."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return 30.0 * s ** 2 * (1.0 - s) ** 2
