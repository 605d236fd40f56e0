"""
Post-hoc checks of generated trajectories: reachability, fingertip
collisions, contact cardinality and finger gaiting.

Object surfaces are sampled once per ObjectModel into an object-frame point
cloud; fingertips are mapped into the object frame at each step and matched
against the cloud with a KD-tree.
"""
import functools
import logging
import math
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from app.core.config import settings
from app.core.exceptions import ValidationError
from app.core.types import FINGERS, N_FINGERS, ObjectShape, Representation
from app.schemas.recording import Recording
from app.schemas.trajectory import Trajectory
from app.schemas.verification import (
    ConstraintReport,
    FingerBox,
    GaitTransition,
    ObjectModel,
    Violation,
    Workspace,
)
from app.utils.audit import audit
from app.utils.geometry import rotation_from_rpy, transform_points

logger = logging.getLogger(__name__)

MIN_CONTACTS = 2
_PAIRS = np.triu_indices(N_FINGERS, k=1)


def _require_physical(t: Trajectory) -> None:
    if t.representation != Representation.PHYSICAL:
        raise ValidationError("Constraint checks expect a physical trajectory")


def _cube_surface(edge: float, resolution: float) -> np.ndarray:
    n = math.ceil(edge / resolution) + 1
    grid = np.linspace(-edge / 2, edge / 2, n)
    u, v = [a.reshape(-1) for a in np.meshgrid(grid, grid)]
    faces = []
    for axis in range(3):
        for side in (-edge / 2, edge / 2):
            face = np.empty((u.size, 3))
            others = [a for a in range(3) if a != axis]
            face[:, axis] = side
            face[:, others[0]] = u
            face[:, others[1]] = v
            faces.append(face)
    # Edge and corner points are shared between faces
    return np.unique(np.round(np.concatenate(faces), 12), axis=0)


def _ring(radius: float, z: float, resolution: float) -> np.ndarray:
    count = max(1, math.ceil(2 * math.pi * radius / resolution))
    theta = 2 * math.pi * np.arange(count) / count
    return np.column_stack([radius * np.cos(theta), radius * np.sin(theta), np.full(count, z)])


def _cylinder_surface(diameter: float, height: float, resolution: float) -> np.ndarray:
    radius = diameter / 2
    levels = np.linspace(-height / 2, height / 2, math.ceil(height / resolution) + 1)
    lateral = [_ring(radius, z, resolution) for z in levels]
    caps = []
    for z in (-height / 2, height / 2):
        for rho in np.linspace(0.0, radius, math.ceil(radius / resolution) + 1)[:-1]:
            caps.append(_ring(rho, z, resolution) if rho > 0 else np.array([[0.0, 0.0, z]]))
    return np.concatenate(lateral + caps)


@functools.lru_cache(maxsize=16)
def _object_cloud(m: ObjectModel) -> Tuple[np.ndarray, cKDTree]:
    if m.shape == ObjectShape.CUBE:
        cloud = _cube_surface(m.edge, m.surface_resolution)
    else:
        cloud = _cylinder_surface(m.diameter, m.height, m.surface_resolution)
    logger.debug(f"Sampled {len(cloud)} surface points for {m.shape.value} at {m.surface_resolution} m")
    return cloud, cKDTree(cloud)


def sample_surface(m: ObjectModel, pose) -> np.ndarray:
    """Surface points of the object at a 6-DoF pose (x, y, z, roll, pitch, yaw)."""
    pose = np.asarray(pose, dtype=float).reshape(-1)
    if pose.shape[0] != 6 or not np.all(np.isfinite(pose)):
        raise ValidationError("An object pose is six finite numbers: x, y, z, roll, pitch, yaw")
    cloud, _ = _object_cloud(m)
    return transform_points(cloud, pose[:3], pose[3:])


def fingertip_surface_distances(t: Trajectory, m: ObjectModel) -> np.ndarray:
    """(N, 5) distance from every fingertip to the nearest surface sample."""
    _require_physical(t)
    _, tree = _object_cloud(m)
    tips = t.fingertips
    to_object = rotation_from_rpy(t.object_orientation).inv()
    local = np.empty_like(tips)
    for i in range(N_FINGERS):
        local[:, i] = to_object.apply(tips[:, i] - t.object_position)
    distances, _ = tree.query(local.reshape(-1, 3))
    return distances.reshape(t.n_steps, N_FINGERS)


def check_reachability(t: Trajectory, w: Workspace) -> np.ndarray:
    """(N, 5) booleans, True where the fingertip lies inside its box (inclusive)."""
    _require_physical(t)
    tips = t.fingertips
    return np.column_stack([w.boxes[finger].contains(tips[:, i]) for i, finger in enumerate(FINGERS)])


def check_collisions(t: Trajectory, d_min: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-step minimum pairwise fingertip distance and a flag where it is below d_min."""
    _require_physical(t)
    d_min = settings.D_MIN if d_min is None else d_min
    if d_min <= 0:
        raise ValidationError("d_min must be > 0")
    tips = t.fingertips
    gaps = np.linalg.norm(tips[:, _PAIRS[0]] - tips[:, _PAIRS[1]], axis=-1)
    distances = gaps.min(axis=1)
    return distances, distances < d_min


def check_contacts(t: Trajectory, m: ObjectModel, tau: Optional[float] = None) -> Tuple[np.ndarray, List[List[str]]]:
    """Per-step number of fingertips within tau of the surface, and which ones."""
    tau = settings.TAU if tau is None else tau
    if tau < 0:
        raise ValidationError("tau must be >= 0")
    in_contact = fingertip_surface_distances(t, m) <= tau
    sets = [[finger for finger, touching in zip(FINGERS, row) if touching] for row in in_contact]
    return in_contact.sum(axis=1), sets


def detect_gaiting(report: Union[ConstraintReport, Iterable[int]]) -> Tuple[bool, List[GaitTransition]]:
    counts = list(report.contact_count if isinstance(report, ConstraintReport) else report)
    if not counts:
        raise ValidationError("Gait detection needs contact counts")
    transitions = [
        GaitTransition(step=k, old=int(counts[k - 1]), new=int(counts[k]))
        for k in range(1, len(counts))
        if counts[k] != counts[k - 1]
    ]
    return bool(transitions), transitions


def fit_workspace(samples: Iterable[Union[Recording, Trajectory]], margin: Optional[float] = None) -> Workspace:
    """Per-finger bounding boxes over palm-frame training data, grown by margin."""
    margin = settings.WORKSPACE_MARGIN if margin is None else margin
    blocks = []
    for item in samples:
        features = item.features() if isinstance(item, Recording) else item.features
        blocks.append(np.asarray(features, dtype=float))
    if not blocks:
        raise ValidationError("Cannot fit a workspace without training data")
    features = np.concatenate(blocks)
    tips = features[:, : 3 * N_FINGERS].reshape(-1, N_FINGERS, 3)
    lower = np.nanmin(tips, axis=0) - margin
    upper = np.nanmax(tips, axis=0) + margin
    boxes = {
        finger: FingerBox(lower=tuple(lower[i]), upper=tuple(upper[i]))
        for i, finger in enumerate(FINGERS)
    }
    logger.info(f"Fitted workspace over {tips.shape[0]} samples with {margin * 1000:.1f} mm margin")
    return Workspace(boxes=boxes, margin=margin)


def verify(
    t: Trajectory,
    m: ObjectModel,
    tau: Optional[float] = None,
    d_min: Optional[float] = None,
    workspace: Optional[Workspace] = None,
) -> ConstraintReport:
    """Run every check and list each violation. Without a workspace every fingertip counts as reachable."""
    tau = settings.TAU if tau is None else tau
    d_min = settings.D_MIN if d_min is None else d_min

    if workspace is not None:
        reachable = check_reachability(t, workspace)
    else:
        reachable = np.ones((t.n_steps, N_FINGERS), dtype=bool)
    distances, flags = check_collisions(t, d_min)
    counts, sets = check_contacts(t, m, tau)

    violations = []
    for step, i in np.argwhere(~reachable):
        violations.append(Violation(
            step=int(step), kind="reachability", finger=FINGERS[i],
            detail=f"{FINGERS[i]} outside its workspace box",
        ))
    if np.any(flags):
        tips = t.fingertips
        for step in np.flatnonzero(flags):
            gaps = np.linalg.norm(tips[step, _PAIRS[0]] - tips[step, _PAIRS[1]], axis=-1)
            pair = int(np.argmin(gaps))
            a, b = FINGERS[_PAIRS[0][pair]], FINGERS[_PAIRS[1][pair]]
            violations.append(Violation(
                step=int(step), kind="collision", value=float(distances[step]),
                detail=f"{a} and {b} closer than {d_min} m",
            ))
    for step in np.flatnonzero(counts < MIN_CONTACTS):
        violations.append(Violation(
            step=int(step), kind="contact", value=float(counts[step]),
            detail=f"{int(counts[step])} fingertips within {tau} m of the surface",
        ))
    violations.sort(key=lambda v: (v.step, v.kind))

    report = ConstraintReport(
        dt=t.dt,
        object_shape=m.shape,
        tau=tau,
        d_min=d_min,
        reachability_ok=reachable.tolist(),
        min_pairwise_distance=distances.tolist(),
        collision_flags=flags.tolist(),
        contact_count=counts.tolist(),
        contact_set=sets,
        violations=violations,
    )
    gaiting, transitions = detect_gaiting(report)
    report = report.model_copy(update={"gaiting_detected": gaiting, "transitions": transitions})
    audit("verification.completed", object=m.shape.value, steps=t.n_steps, violations=len(violations),
          collisions=int(flags.sum()), gaiting=gaiting)
    return report
