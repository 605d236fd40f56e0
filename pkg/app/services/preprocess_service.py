"""
Preprocessing of demonstration recordings into the training matrix V.

Order: split on long gaps -> cubic gap fill -> palm frame -> zero-phase
low-pass -> offset + 1-second segmentation.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal
from scipy.interpolate import CubicSpline

from app.core.config import settings
from app.core.exceptions import (
    DegeneratePalmPoseError,
    GapTooLongError,
    InvalidCutoffError,
    ValidationError,
)
from app.core.types import (
    FEATURE_COLUMNS,
    FINGERTIP_COLUMNS,
    OBJECT_ORIENTATION_COLUMNS,
    OBJECT_POSITION_COLUMNS,
    PALM_COLUMNS,
    TIME_COLUMN,
    N_FINGERS,
    Representation,
)
from app.schemas.recording import DemoMatrix, Recording
from app.schemas.trajectory import OffsetSpec, Trajectory
from app.services.trajectory_codec import apply_offset, flatten
from app.utils.geometry import rotation_from_rpy, rpy_from_rotation

logger = logging.getLogger(__name__)

CHANNEL_COLUMNS = FEATURE_COLUMNS + PALM_COLUMNS
# Allowed relative deviation from the configured sample rate, matching the 1% timestamp uniformity
RATE_TOLERANCE = 0.01


def _missing_runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """[start, stop) index pairs of consecutive True values."""
    padded = np.concatenate([[0], mask.astype(np.int8), [0]])
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[0::2], edges[1::2]))


class PreprocessService:
    """Turns raw recordings into a non-negative DemoMatrix"""

    def __init__(
        self,
        n_steps: int = None,
        max_gap_s: float = None,
        cutoff_hz: float = None,
        filter_order: int = None,
        sample_rate_hz: float = None,
    ):
        self.n_steps = n_steps or settings.N_STEPS
        self.max_gap_s = max_gap_s if max_gap_s is not None else settings.MAX_GAP_S
        self.cutoff_hz = cutoff_hz if cutoff_hz is not None else settings.CUTOFF_HZ
        self.filter_order = filter_order or settings.FILTER_ORDER
        self.sample_rate_hz = sample_rate_hz or settings.SAMPLE_RATE_HZ

    def _check_rate(self, r: Recording) -> None:
        # Segments are n_steps samples at the dictionary rate; no resampling
        if abs(r.sample_rate_hz - self.sample_rate_hz) > RATE_TOLERANCE * self.sample_rate_hz:
            raise ValidationError(
                f"Recording {r.source} is sampled at {r.sample_rate_hz:g} Hz, expected {self.sample_rate_hz:g} Hz",
                error_code="sample_rate_mismatch",
            )

    def _max_gap_samples(self, r: Recording) -> int:
        return int(round(self.max_gap_s * r.sample_rate_hz))

    def split_on_long_gaps(self, r: Recording) -> List[Recording]:
        """Cut the recording wherever any channel misses more than max_gap_s in a row.

        The long gap itself is dropped; pieces too short for one segment are discarded.
        """
        limit = self._max_gap_samples(r)
        bad = np.zeros(r.n_samples, dtype=bool)
        for column in CHANNEL_COLUMNS:
            for start, stop in _missing_runs(r.samples[column].isna().to_numpy()):
                if stop - start > limit:
                    bad[start:stop] = True
        if not bad.any():
            return [r]

        pieces = []
        for start, stop in _missing_runs(~bad):
            if stop - start < self.n_steps:
                logger.info(f"Dropping {stop - start}-sample piece of {r.source} shorter than one segment")
                continue
            label = f"{r.source}[{start}:{stop}]"
            pieces.append(r.replace(r.samples.iloc[start:stop].reset_index(drop=True), source=label))
        logger.info(f"Split {r.source} into {len(pieces)} pieces on long gaps")
        return pieces

    def fill_gaps(self, r: Recording) -> Recording:
        """Replace missing samples with a cubic spline through the valid samples of each channel."""
        if not r.has_gaps:
            return r
        limit = self._max_gap_samples(r)
        samples = r.samples.copy()
        t = samples[TIME_COLUMN].to_numpy()

        for column in CHANNEL_COLUMNS:
            values = samples[column].to_numpy(dtype=float)
            missing = np.isnan(values)
            if not missing.any():
                continue
            for start, stop in _missing_runs(missing):
                if stop - start > limit:
                    raise GapTooLongError(
                        f"Gap of {stop - start} samples in {column} exceeds {limit}",
                        details=f"samples {start}..{stop - 1} of {r.source}",
                    )
            valid = ~missing
            if valid.sum() < 2:
                raise GapTooLongError(f"Channel {column} has fewer than two valid samples")

            first, last = np.flatnonzero(valid)[[0, -1]]
            interior = missing.copy()
            interior[:first] = False
            interior[last + 1:] = False
            spline = CubicSpline(t[valid], values[valid])
            values[interior] = spline(t[interior])
            # Leading/trailing gaps hold the nearest valid sample
            values[:first] = values[first]
            values[last + 1:] = values[last]
            samples[column] = values

        return r.replace(samples)

    def to_palm_frame(self, r: Recording) -> Recording:
        """Express fingertips and object pose relative to the palm pose at the same sample."""
        palm = r.samples[PALM_COLUMNS].to_numpy(dtype=float)
        if not np.all(np.isfinite(palm)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(palm), axis=1))[0])
            raise DegeneratePalmPoseError(f"Palm pose is undefined at sample {bad} of {r.source}")

        palm_position = palm[:, :3]
        palm_rotation = rotation_from_rpy(palm[:, 3:])
        to_palm = palm_rotation.inv()

        samples = r.samples.copy()
        tips = samples[FINGERTIP_COLUMNS].to_numpy(dtype=float).reshape(-1, N_FINGERS, 3)
        for i in range(N_FINGERS):
            tips[:, i] = to_palm.apply(tips[:, i] - palm_position)
        samples[FINGERTIP_COLUMNS] = tips.reshape(-1, 3 * N_FINGERS)

        obj_position = samples[OBJECT_POSITION_COLUMNS].to_numpy(dtype=float)
        samples[OBJECT_POSITION_COLUMNS] = to_palm.apply(obj_position - palm_position)
        obj_rotation = rotation_from_rpy(samples[OBJECT_ORIENTATION_COLUMNS].to_numpy(dtype=float))
        samples[OBJECT_ORIENTATION_COLUMNS] = rpy_from_rotation(to_palm * obj_rotation)

        samples[PALM_COLUMNS] = 0.0
        return r.replace(samples, palm_frame=True)

    def lowpass(self, r: Recording, cutoff_hz: Optional[float] = None) -> Recording:
        """Zero-phase Butterworth low-pass (forward-backward) on every channel."""
        cutoff = self.cutoff_hz if cutoff_hz is None else cutoff_hz
        nyquist = r.sample_rate_hz / 2.0
        if not 0 < cutoff < nyquist:
            raise InvalidCutoffError(f"Cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz")
        if r.has_gaps:
            raise ValidationError("Fill gaps before filtering")

        b, a = signal.butter(self.filter_order, cutoff / nyquist, btype="low")
        padlen = 3 * max(len(a), len(b))
        if r.n_samples <= padlen:
            raise ValidationError(f"Recording {r.source} is too short to filter ({r.n_samples} samples)")

        samples = r.samples.copy()
        values = samples[CHANNEL_COLUMNS].to_numpy(dtype=float)
        samples[CHANNEL_COLUMNS] = signal.filtfilt(b, a, values, axis=0)
        return r.replace(samples, filtered=True)

    def segment(self, r: Recording, s: OffsetSpec) -> DemoMatrix:
        """Non-overlapping n_steps windows, offset and flattened into columns; the remainder is dropped."""
        if not r.palm_frame or not r.filtered:
            raise ValidationError("Segment only palm-frame, filtered recordings")
        self._check_rate(r)
        features = r.features()
        m = features.shape[0] // self.n_steps
        dropped = features.shape[0] - m * self.n_steps
        if dropped:
            logger.debug(f"Discarding {dropped} trailing samples of {r.source}")

        columns = []
        for i in range(m):
            window = features[i * self.n_steps:(i + 1) * self.n_steps]
            physical = Trajectory(features=window, dt=r.dt, representation=Representation.PHYSICAL)
            columns.append(flatten(apply_offset(physical, s)))

        v = np.stack(columns, axis=1) if columns else np.zeros((len(FEATURE_COLUMNS) * self.n_steps, 0))
        sources = [f"{r.source}#{i}" for i in range(m)]
        return DemoMatrix(v=v, n_steps=self.n_steps, offsets=s, segment_sources=sources)

    def prepare(self, r: Recording) -> List[Recording]:
        """Split, fill, palm-transform and filter one raw recording."""
        self._check_rate(r)
        prepared = []
        for piece in self.split_on_long_gaps(r):
            piece = self.fill_gaps(piece)
            if not piece.palm_frame:
                piece = self.to_palm_frame(piece)
            if not piece.filtered:
                piece = self.lowpass(piece)
            prepared.append(piece)
        return prepared

    def build_demo_matrix(self, recordings: Sequence[Recording], s: OffsetSpec) -> DemoMatrix:
        matrices = []
        for recording in recordings:
            for piece in self.prepare(recording):
                matrices.append(self.segment(piece, s))
        demo = stack_demo_matrices(matrices, n_steps=self.n_steps, offsets=s)
        logger.info(f"Built V with {demo.n} rows x {demo.m} columns from {len(recordings)} recordings")
        return demo


def stack_demo_matrices(matrices: Sequence[DemoMatrix], n_steps: int, offsets: OffsetSpec) -> DemoMatrix:
    if not matrices:
        raise ValidationError("No segments to stack")
    v = np.concatenate([dm.v for dm in matrices], axis=1)
    sources = [src for dm in matrices for src in dm.segment_sources]
    return DemoMatrix(v=v, n_steps=n_steps, offsets=offsets, segment_sources=sources)
