"""
Synthetic demonstrations with a known ground truth.

The object follows minimum-jerk rotations and translations about its own
center; grounded fingertips ride fixed surface contact points, lifted ones
follow an arc along the surface normal to a shifted contact point. The palm
stays at the origin, so recordings are already palm-frame data.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist
from scipy.spatial.transform import Rotation

from app.core.exceptions import ScriptInfeasibleError, ValidationError
from app.core.types import (
    FEATURE_COLUMNS,
    FINGERS,
    N_FINGERS,
    PALM_COLUMNS,
    TIME_COLUMN,
    ObjectShape,
)
from app.schemas.recording import Recording
from app.schemas.script import (
    MAX_ROTATION_DEG,
    MAX_TRANSLATION_M,
    GaitEvent,
    ManipulationScript,
    RotateAction,
    TranslateAction,
)
from app.schemas.verification import ObjectModel
from app.utils.geometry import AXIS_VECTORS, axis_rotation, minimum_jerk, rpy_from_rotation

logger = logging.getLogger(__name__)

MAX_LIFTED = N_FINGERS - 2
MIN_CONTACT_SPACING = 0.01

# Object-frame contact layout: (cube point, cylinder angle in degrees)
_CUBE_CONTACTS = np.array([
    [0.001, -1.0, 0.005],   # thumb, -y face
    [-0.015, 1.0, 0.005],   # index, +y face
    [0.001, 1.0, 0.005],    # middle
    [0.017, 1.0, 0.005],    # ring
    [1.0, -0.009, 0.005],   # little, +x face
])
_CYLINDER_ANGLES = np.radians([-90.0, 55.0, 90.0, 125.0, 0.0])
_CONTACT_HEIGHT = 0.005


def contact_points(obj: ObjectModel, rng: np.random.Generator, jitter: float) -> Tuple[np.ndarray, np.ndarray]:
    """Initial contact points and outward surface normals, both (5, 3) in the object frame."""
    if obj.shape == ObjectShape.CUBE:
        half = obj.edge / 2
        points = _CUBE_CONTACTS.copy()
        normals = np.zeros_like(points)
        for i, row in enumerate(points):
            axis = int(np.argmax(np.abs(row)))
            normals[i, axis] = np.sign(row[axis])
            points[i, axis] = normals[i, axis] * half
            tangential = [a for a in range(3) if a != axis]
            # Neighbouring fingers on the same face are 16 mm apart along x
            scale = np.where(np.array(tangential) == 0, 0.5, 1.0)
            points[i, tangential] += scale * rng.uniform(-jitter, jitter, size=2)
    else:
        radius = obj.diameter / 2
        angles = _CYLINDER_ANGLES + rng.uniform(-jitter, jitter, size=N_FINGERS) / (2 * radius)
        heights = _CONTACT_HEIGHT + rng.uniform(-jitter, jitter, size=N_FINGERS)
        normals = np.column_stack([np.cos(angles), np.sin(angles), np.zeros(N_FINGERS)])
        points = np.column_stack([radius * normals[:, :2], heights])

    spacing = float(pdist(points).min())
    if spacing < MIN_CONTACT_SPACING:
        raise ScriptInfeasibleError(
            f"Contact points are {spacing * 1000:.1f} mm apart; at least {MIN_CONTACT_SPACING * 1000:.0f} mm needed",
            details=f"contact_jitter={jitter}",
        )
    return points, normals


def _lift_profile(event: GaitEvent, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    s = (t - event.time) / event.duration
    during = (s > 0) & (s < 1)
    return during, s


def _check_gait_events(script: ManipulationScript, t: np.ndarray) -> None:
    lifted = np.zeros(t.shape[0], dtype=int)
    busy = {finger: np.zeros(t.shape[0], dtype=bool) for finger in FINGERS}
    for event in script.gait_events:
        during, _ = _lift_profile(event, t)
        if np.any(busy[event.finger] & during):
            raise ScriptInfeasibleError(f"Overlapping gait events for {event.finger}", details=f"event at {event.time}s")
        busy[event.finger] |= during
        lifted += during
    if lifted.max(initial=0) > MAX_LIFTED:
        step = int(np.argmax(lifted))
        raise ScriptInfeasibleError(
            f"{int(lifted[step])} fingers lifted at t={t[step]:.2f}s; at least 2 must stay on the object"
        )


def _object_motion(script: ManipulationScript, t: np.ndarray) -> Tuple[np.ndarray, Rotation]:
    center = np.asarray(script.object_center, dtype=float)
    positions = np.tile(center, (t.shape[0], 1))
    matrices = np.tile(np.eye(3), (t.shape[0], 1, 1))
    current_rotation = Rotation.identity()
    current_position = center.copy()

    cursor = script.rest_before
    for action in script.actions:
        progress = minimum_jerk((t - cursor) / action.duration)
        # Later actions overwrite from their start time onwards
        active = t >= cursor
        cursor += action.duration
        if isinstance(action, RotateAction):
            angle = np.radians(action.degrees)
            if active.any():
                step = axis_rotation(action.axis, angle * progress[active])
                matrices[active] = (step * current_rotation).as_matrix()
                positions[active] = current_position
            current_rotation = axis_rotation(action.axis, angle) * current_rotation
        else:
            offset = action.meters * AXIS_VECTORS[action.axis]
            positions[active] = current_position + progress[active, None] * offset
            matrices[active] = current_rotation.as_matrix()
            current_position = current_position + offset
    return positions, Rotation.from_matrix(matrices)


def _contact_tracks(script: ManipulationScript, t: np.ndarray, points: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """(n, 5, 3) object-frame fingertip positions including lift/replace arcs."""
    tracks = np.repeat(points[None], t.shape[0], axis=0)
    current = points.copy()
    for event in sorted(script.gait_events, key=lambda e: e.time):
        i = FINGERS.index(event.finger)
        old = current[i].copy()
        # Slide along the object z axis, towards the middle of the face
        direction = -1.0 if old[2] > 0 else 1.0
        new = old + direction * event.shift * AXIS_VECTORS["z"]
        during, s = _lift_profile(event, t)
        blend = minimum_jerk(s[during])[:, None]
        arc = event.lift_height * np.sin(np.pi * s[during])[:, None]
        tracks[during, i] = (1.0 - blend) * old + blend * new + arc * normals[i]
        tracks[t >= event.end, i] = new
        current[i] = new
    return tracks


def synthesize(script: ManipulationScript) -> Recording:
    rng = np.random.default_rng(script.seed)
    n = int(round(script.duration * script.sample_rate_hz)) + 1
    t = np.arange(n) / script.sample_rate_hz
    _check_gait_events(script, t)

    points, normals = contact_points(script.object, rng, script.contact_jitter)
    positions, rotation = _object_motion(script, t)
    tracks = _contact_tracks(script, t, points, normals)

    tips = np.empty_like(tracks)
    for i in range(N_FINGERS):
        tips[:, i] = rotation.apply(tracks[:, i]) + positions
    if script.noise_std > 0:
        tips += rng.normal(0.0, script.noise_std, size=tips.shape)

    features = np.column_stack([tips.reshape(n, -1), positions, rpy_from_rotation(rotation)])
    samples = pd.DataFrame(features, columns=FEATURE_COLUMNS)
    samples.insert(0, TIME_COLUMN, t)
    for column in PALM_COLUMNS:
        samples[column] = 0.0

    label = f"synth-{script.object.shape.value}-seed{script.seed}"
    logger.debug(f"Synthesized {label}: {n} samples, {len(script.actions)} actions, {len(script.gait_events)} gait events")
    return Recording(samples=samples, sample_rate_hz=script.sample_rate_hz, source=label)


def expected_contact_counts(script: ManipulationScript, tau: float) -> np.ndarray:
    """Ground-truth contact count per sample: fingers lifted more than tau off the surface are out."""
    n = int(round(script.duration * script.sample_rate_hz)) + 1
    t = np.arange(n) / script.sample_rate_hz
    counts = np.full(n, N_FINGERS)
    for event in script.gait_events:
        during, s = _lift_profile(event, t)
        lifted = during & (event.lift_height * np.sin(np.pi * np.clip(s, 0.0, 1.0)) > tau)
        counts -= lifted
    return counts


def random_script(
    obj: ObjectModel,
    seed: int,
    duration: float,
    noise_std: Optional[float] = None,
    rest: float = 0.5,
) -> ManipulationScript:
    """A random but valid script of roughly `duration` seconds with sequential gait events."""
    rng = np.random.default_rng(seed)
    actions = []
    totals = {"x": 0.0, "y": 0.0}
    shift = 0.0
    elapsed = 2 * rest
    while elapsed < duration:
        action_time = float(rng.uniform(1.0, 2.0))
        if rng.random() < 2.0 / 3.0:
            axis = "x" if rng.random() < 0.5 else "y"
            degrees = float(rng.uniform(5.0, 20.0)) * (1 if rng.random() < 0.5 else -1)
            if abs(totals[axis] + degrees) > MAX_ROTATION_DEG:
                degrees = -degrees
            totals[axis] += degrees
            actions.append(RotateAction(axis=axis, degrees=degrees, duration=action_time))
        else:
            meters = float(rng.uniform(0.03, 0.10)) * (1 if rng.random() < 0.5 else -1)
            if abs(shift + meters) > MAX_TRANSLATION_M:
                meters = -meters
            shift += meters
            actions.append(TranslateAction(meters=meters, duration=action_time))
        elapsed += action_time

    events = []
    cursor = rest + float(rng.uniform(0.2, 1.0))
    while True:
        event = GaitEvent(
            time=round(cursor, 2),
            finger=FINGERS[int(rng.integers(N_FINGERS))],
            lift_height=float(rng.uniform(0.02, 0.03)),
            duration=float(rng.uniform(0.3, 0.5)),
        )
        if event.end > elapsed - rest:
            break
        events.append(event)
        cursor = event.end + float(rng.uniform(0.3, 1.5))

    fields = {"object": obj, "actions": actions, "gait_events": events, "seed": seed,
              "rest_before": rest, "rest_after": rest}
    if noise_std is not None:
        fields["noise_std"] = noise_std
    return ManipulationScript(**fields)


def split_recordings(
    recordings: Sequence[Recording],
    split: Sequence[int] = (5, 1),
    seed: int = 0,
) -> Tuple[List[Recording], List[Recording]]:
    """Seeded train/test split at the recording level, train:test = split[0]:split[1]."""
    if not recordings:
        raise ValidationError("Nothing to split")
    n = len(recordings)
    if n == 1:
        logger.warning("Only one recording: it goes to the training set and the test set is empty")
        return list(recordings), []
    n_test = min(int(round(n * split[1] / sum(split))), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    test_idx = set(order[:n_test].tolist())
    train = [r for i, r in enumerate(recordings) if i not in test_idx]
    test = [r for i, r in enumerate(recordings) if i in test_idx]
    return train, test


def make_dataset(
    scripts: Sequence[ManipulationScript],
    split: Sequence[int] = (5, 1),
    seed: int = 0,
) -> Tuple[List[Recording], List[Recording]]:
    if not scripts:
        raise ValidationError("make_dataset needs at least one script")
    recordings = [synthesize(script) for script in scripts]
    train, test = split_recordings(recordings, split, seed)
    logger.info(f"Synthetic dataset: {len(train)} train / {len(test)} test recordings")
    return train, test
