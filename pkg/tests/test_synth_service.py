import logging

import numpy as np
import pytest

from app.core.exceptions import ScriptInfeasibleError, ValidationError
from app.core.types import PALM_COLUMNS
from app.schemas.script import GaitEvent, ManipulationScript, RotateAction, TranslateAction
from app.schemas.trajectory import Trajectory
from app.schemas.verification import ObjectModel
from app.services.constraint_service import verify
from app.services.synth_service import (
    contact_points,
    expected_contact_counts,
    make_dataset,
    random_script,
    split_recordings,
    synthesize,
)
from app.utils.geometry import minimum_jerk_velocity


def _script(**fields):
    base = {"noise_std": 0.0, "contact_jitter": 0.0}
    base.update(fields)
    return ManipulationScript(**base)


def _as_trajectory(recording):
    return Trajectory(features=recording.features(), dt=recording.dt)


@pytest.mark.parametrize("shape", ["cube", "cylinder"])
def test_contact_points_lie_on_the_surface(shape):
    obj = ObjectModel.named(shape)
    points, normals = contact_points(obj, np.random.default_rng(0), jitter=0.003)

    assert points.shape == (5, 3)
    np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0)
    if shape == "cube":
        assert np.allclose(np.max(np.abs(points), axis=1), 0.025)
    else:
        np.testing.assert_allclose(np.linalg.norm(points[:, :2], axis=1), 0.025)
    gaps = np.linalg.norm(points[:, None] - points[None], axis=-1)
    assert np.min(gaps[np.triu_indices(5, k=1)]) >= 0.01


def test_synthesized_recording_layout():
    script = _script(rest_before=0.5, actions=[RotateAction(axis="x", degrees=10.0)], seed=3)

    recording = synthesize(script)

    assert recording.n_samples == 151
    assert recording.source == "synth-cube-seed3"
    assert not recording.has_gaps
    assert np.all(recording.samples[PALM_COLUMNS].to_numpy() == 0.0)


def test_rotation_reaches_its_angle_and_keeps_contact(cube):
    script = _script(actions=[RotateAction(axis="x", degrees=20.0, duration=1.0)], rest_after=0.2)

    recording = synthesize(script)
    report = verify(_as_trajectory(recording), cube)

    final = recording.samples.iloc[-1]
    assert final["obj_roll"] == pytest.approx(np.radians(20.0), abs=1e-9)
    assert final["obj_pitch"] == pytest.approx(0.0, abs=1e-9)
    assert set(report.contact_count) == {5}
    assert report.passed


def test_translation_moves_the_object_along_y():
    script = _script(actions=[TranslateAction(meters=-0.05, duration=1.0)])

    final = synthesize(script).samples.iloc[-1]

    assert final["obj_y"] == pytest.approx(-0.05, abs=1e-12)
    assert final["obj_z"] == pytest.approx(0.07)


def test_gait_contact_counts_match_ground_truth(cube):
    script = _script(
        rest_before=1.5,
        gait_events=[GaitEvent(time=0.5, finger="thumb", lift_height=0.03, duration=0.4)],
    )

    report = verify(_as_trajectory(synthesize(script)), cube, tau=0.01)
    expected = expected_contact_counts(script, tau=0.01)

    assert report.contact_count == expected.tolist()
    assert min(expected) == 4
    assert report.gaiting_detected
    assert [t.new for t in report.transitions] == [4, 5]


def test_too_many_lifted_fingers_is_infeasible():
    events = [GaitEvent(time=0.2, finger=f) for f in ("index", "middle", "ring", "little")]

    with pytest.raises(ScriptInfeasibleError):
        synthesize(_script(rest_before=1.0, gait_events=events))


def test_overlapping_events_for_one_finger_are_infeasible():
    events = [GaitEvent(time=0.2, finger="index"), GaitEvent(time=0.4, finger="index")]

    with pytest.raises(ScriptInfeasibleError):
        synthesize(_script(rest_before=1.0, gait_events=events))


def test_same_seed_same_recording():
    script = ManipulationScript(actions=[RotateAction(axis="y", degrees=-15.0)], seed=4)

    first, second = synthesize(script), synthesize(script)
    other = synthesize(script.model_copy(update={"seed": 5}))

    assert first.samples.equals(second.samples)
    assert not first.samples.equals(other.samples)


def test_random_script_is_valid_and_long_enough(cube):
    script = random_script(cube, seed=12, duration=20.0)

    assert script.duration >= 20.0
    ends = [event.end for event in script.gait_events]
    starts = [event.time for event in script.gait_events]
    assert all(start > end for start, end in zip(starts[1:], ends[:-1]))
    recording = synthesize(script)
    assert recording.n_samples == int(round(script.duration * 100)) + 1


def test_split_is_seeded_and_disjoint(cube):
    recordings = [synthesize(_script(seed=i, rest_before=1.0)) for i in range(6)]

    train, test = split_recordings(recordings, split=(5, 1), seed=1)
    again, _ = split_recordings(recordings, split=(5, 1), seed=1)

    assert len(train) == 5 and len(test) == 1
    assert [r.source for r in train] == [r.source for r in again]
    assert not {r.source for r in train} & {r.source for r in test}


def test_single_recording_goes_to_training(caplog):
    recording = synthesize(_script(rest_before=1.0))

    with caplog.at_level(logging.WARNING):
        train, test = split_recordings([recording])

    assert train == [recording] and test == []
    assert "Only one recording" in caplog.text
    with pytest.raises(ValidationError):
        split_recordings([])


def test_make_dataset_synthesizes_every_script(cube):
    scripts = [random_script(cube, seed=s, duration=3.0) for s in range(2)]

    train, test = make_dataset(scripts, split=(1, 1), seed=0)

    assert len(train) == 1 and len(test) == 1


def test_translation_peak_speed_follows_minimum_jerk_profile():
    script = _script(actions=[TranslateAction(meters=0.1, duration=1.0)])

    y = synthesize(script).samples["obj_y"].to_numpy()
    peak = np.max(np.abs(np.diff(y))) / 0.01

    profile_peak = float(np.max(minimum_jerk_velocity(np.linspace(0.0, 1.0, 1001))))
    assert profile_peak == pytest.approx(1.875)
    assert peak == pytest.approx(0.1 * profile_peak / 1.0, rel=1e-3)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fingertip_speeds_stay_below_one_meter_per_second(cube, seed):
    recording = synthesize(random_script(cube, seed=seed, duration=8.0, noise_std=0.0))
    tips = recording.features()[:, :15].reshape(-1, 5, 3)
    speeds = np.linalg.norm(np.diff(tips, axis=0), axis=-1) / recording.dt

    assert speeds.max() <= 1.0
