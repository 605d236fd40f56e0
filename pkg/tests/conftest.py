import numpy as np
import pandas as pd
import pytest

from app.core.types import FEATURE_COLUMNS, N_FEATURES, PALM_COLUMNS, TIME_COLUMN
from app.schemas.dictionary import Dictionary
from app.schemas.recording import Recording
from app.schemas.trajectory import Frame, OffsetSpec, Trajectory
from app.schemas.verification import ObjectModel
from app.services.synth_service import contact_points

OBJECT_CENTER = np.array([0.0, 0.0, 0.07])


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def make_dictionary():
    """Random positive dictionary; small N and l keep solves fast."""
    def _make(n_steps=5, n_primitives=3, seed=0, low=0.2, high=1.0):
        rng = np.random.default_rng(seed)
        w = rng.uniform(low, high, size=(N_FEATURES * n_steps, n_primitives))
        return Dictionary(w=w, n_steps=n_steps, n_primitives=n_primitives)
    return _make


@pytest.fixture
def endpoint_frames():
    """Initial and final frames reproduced exactly by activations h."""
    def _frames(dictionary: Dictionary, h):
        pattern = dictionary.offsets.pattern()
        h = np.asarray(h, dtype=float)
        initial = Frame.from_vector(dictionary.block(1) @ h - pattern)
        final = Frame.from_vector(dictionary.block(dictionary.n_steps) @ h - pattern)
        return initial, final
    return _frames


@pytest.fixture
def make_trajectory():
    def _make(tips, object_position=OBJECT_CENTER, object_orientation=(0.0, 0.0, 0.0), dt=0.01):
        tips = np.asarray(tips, dtype=float)
        n = tips.shape[0]
        position = np.broadcast_to(np.asarray(object_position, dtype=float), (n, 3))
        orientation = np.broadcast_to(np.asarray(object_orientation, dtype=float), (n, 3))
        features = np.column_stack([tips.reshape(n, -1), position, orientation])
        return Trajectory(features=features, dt=dt)
    return _make


@pytest.fixture
def make_recording():
    def _make(features, palm=None, rate=100.0, source="fixture"):
        features = np.asarray(features, dtype=float)
        samples = pd.DataFrame(features, columns=FEATURE_COLUMNS)
        samples.insert(0, TIME_COLUMN, np.arange(features.shape[0]) / rate)
        palm = np.zeros((features.shape[0], 6)) if palm is None else np.asarray(palm, dtype=float)
        for j, column in enumerate(PALM_COLUMNS):
            samples[column] = palm[:, j]
        return Recording(samples=samples, sample_rate_hz=rate, source=source)
    return _make


@pytest.fixture
def cube():
    return ObjectModel()


@pytest.fixture
def grasp_tips(cube):
    """Five fingertips on the cube surface (palm frame, object at its rest center)."""
    points, _ = contact_points(cube, np.random.default_rng(0), jitter=0.0)
    return points + OBJECT_CENTER


@pytest.fixture
def offsets():
    return OffsetSpec()
