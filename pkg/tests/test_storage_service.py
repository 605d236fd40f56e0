import hashlib
import json

import numpy as np
import pytest

from app.core.exceptions import (
    DimensionMismatchError,
    NonNegativityViolatedError,
    NotFoundError,
    ValidationError,
)
from app.schemas.dictionary import Provenance
from app.schemas.evaluation import ErrorStat, ErrorTable
from app.schemas.recording import DemoMatrix
from app.schemas.trajectory import Trajectory
from app.services import storage_service as storage


def test_trajectory_csv_keeps_full_precision(tmp_path, rng):
    t = Trajectory(features=rng.normal(0.0, 0.1, (5, 21)), dt=0.01)

    loaded = storage.read_trajectory_csv(storage.write_trajectory_csv(t, tmp_path / "traj.csv"))

    np.testing.assert_array_equal(loaded.features, t.features)
    assert loaded.dt == pytest.approx(0.01, abs=1e-12)
    header = (tmp_path / "traj.csv").read_text().splitlines()[0]
    assert header.startswith("t,thumb_x,thumb_y,thumb_z,index_x")
    assert header.endswith("obj_roll,obj_pitch,obj_yaw")


def test_frame_csv_needs_exactly_one_row(tmp_path, rng):
    t = Trajectory(features=rng.normal(0.0, 0.1, (2, 21)))
    storage.write_trajectory_csv(t, tmp_path / "two.csv")

    frame = t.frame(-1)
    assert storage.read_frame_csv(storage.write_frame_csv(frame, tmp_path / "one.csv")) == frame
    with pytest.raises(ValidationError):
        storage.read_frame_csv(tmp_path / "two.csv")


def test_recording_csv_keeps_gaps(tmp_path, make_recording):
    features = np.full((20, 21), 0.1)
    features[5:8, 3] = np.nan
    recording = make_recording(features, source="gappy")

    loaded = storage.read_recording_csv(storage.write_recording_csv(recording, tmp_path / "rec.csv"))

    assert loaded.source == "rec"
    assert loaded.sample_rate_hz == pytest.approx(100.0)
    assert loaded.gaps.equals(recording.gaps)


def test_missing_csv_is_not_found(tmp_path):
    with pytest.raises(NotFoundError):
        storage.read_trajectory_csv(tmp_path / "absent.csv")


@pytest.mark.parametrize("sidecar", [False, True])
def test_dictionary_container_restores_w(tmp_path, make_dictionary, sidecar):
    d = make_dictionary(n_steps=3, n_primitives=2).model_copy(
        update={"provenance": Provenance(object_label="cube", seed=4, iterations=12)}
    )

    loaded = storage.load_dictionary(storage.save_matrix(d, tmp_path / "dictionary.json", sidecar=sidecar))

    np.testing.assert_array_equal(loaded.w, d.w)
    assert loaded.n_steps == 3
    assert loaded.provenance.object_label == "cube"
    assert loaded.provenance.iterations == 12
    assert (tmp_path / "dictionary.f64").exists() == sidecar


def test_sidecar_checksum_is_verified(tmp_path, make_dictionary):
    path = storage.save_matrix(make_dictionary(), tmp_path / "dictionary.json", sidecar=True)
    sidecar = tmp_path / "dictionary.f64"
    raw = bytearray(sidecar.read_bytes())
    raw[0] ^= 0xFF
    sidecar.write_bytes(bytes(raw))

    with pytest.raises(ValidationError) as exc:
        storage.load_dictionary(path)

    assert exc.value.error_code == "checksum_mismatch"


def test_container_checks_header(tmp_path, make_dictionary):
    path = storage.save_matrix(make_dictionary(n_steps=3), tmp_path / "dictionary.json")

    with pytest.raises(DimensionMismatchError):
        storage.load_dictionary(path, expected_n_steps=100)
    with pytest.raises(ValidationError):
        storage.load_demo_matrix(path)

    document = json.loads(path.read_text())
    document["format_version"] = 99
    path.write_text(json.dumps(document))
    with pytest.raises(ValidationError) as exc:
        storage.load_dictionary(path)
    assert exc.value.error_code == "unsupported_version"


def test_negative_payload_is_rejected(tmp_path):
    demo = DemoMatrix(v=np.full((42, 3), 0.5), n_steps=2, segment_sources=["a#0", "a#1", "b#0"])
    path = storage.save_matrix(demo, tmp_path / "demo.json")
    assert storage.load_demo_matrix(path).segment_sources == ["a#0", "a#1", "b#0"]

    document = json.loads(path.read_text())
    document["payload"]["data"] = "-" + document["payload"]["data"]
    path.write_text(json.dumps(document))

    with pytest.raises(NonNegativityViolatedError):
        storage.load_demo_matrix(path)


def test_missing_container_is_not_found(tmp_path):
    with pytest.raises(NotFoundError):
        storage.load_dictionary(tmp_path / "nothing.json")


def test_model_json_round_trip(tmp_path):
    table = ErrorTable(title="Pose error", object_label="cube", rows=[ErrorStat(label="x-rotation", unit="deg", mean=-3.1)])

    loaded = storage.read_model_json(ErrorTable, storage.write_model_json(table, tmp_path / "t.json"))

    assert loaded == table
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(ValidationError):
        storage.read_model_json(ErrorTable, tmp_path / "bad.json")


def test_manifest_lists_sorted_hashes(tmp_path):
    (tmp_path / "b").mkdir()
    second = tmp_path / "b" / "z.txt"
    second.write_text("zz")
    first = tmp_path / "a.txt"
    first.write_text("a")

    path = storage.write_manifest(tmp_path, [second, first], tmp_path / "manifest.json")

    entries = json.loads(path.read_text())["artifacts"]
    assert [e["path"] for e in entries] == ["a.txt", "b/z.txt"]
    assert entries[0]["sha256"] == hashlib.sha256(b"a").hexdigest()
    assert entries[1]["bytes"] == 2
