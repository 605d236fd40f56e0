"""
Error tables, timing benchmarks and plot data.

Reconstruction tables report per-finger Euclidean errors (mm), the object
translation error (mm) and signed orientation errors (rad). Endpoint tables
report per-axis translation (mm) and rotation (degrees) errors of the final
frame, and can be summarized per motion family with mean and range.
"""
import logging
import time
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.core.exceptions import DimensionMismatchError, InfeasibleError, ValidationError
from app.core.types import (
    ANGLES,
    AXES,
    FINGERS,
    N_FEATURES,
    N_FINGERS,
    FINGERTIP_SLICE,
    OBJECT_ORIENTATION_SLICE,
    OBJECT_POSITION_SLICE,
)
from app.schemas.dictionary import Dictionary
from app.schemas.evaluation import BenchReport, ErrorStat, ErrorTable
from app.schemas.generation import GenerationRequest, GenerationResult, VelocityBounds
from app.schemas.recording import DemoMatrix
from app.schemas.trajectory import Frame, OffsetSpec
from app.schemas.verification import ConstraintReport
from app.services.generation_service import GenerationService

logger = logging.getLogger(__name__)

MIN_BENCH_REQUESTS = 20

# Motion family -> (endpoint row it is judged on)
FAMILY_ROWS = {
    "x-rotation": "rotation_x",
    "y-rotation": "rotation_y",
    "y-translation": "translation_y",
}


def _wrap_angle(angle: np.ndarray) -> np.ndarray:
    """Map angle differences into [-pi, pi)."""
    return (np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi


def _stat(label: str, unit: str, values: np.ndarray) -> ErrorStat:
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        return ErrorStat(label=label, unit=unit, mean=0.0, count=0)
    return ErrorStat(
        label=label,
        unit=unit,
        mean=float(values.mean()),
        std=float(values.std()),
        min=float(values.min()),
        max=float(values.max()),
        count=int(values.size),
    )


def _frames(columns: np.ndarray, n_steps: int) -> np.ndarray:
    """(21N x m) flattened columns -> (m*N, 21) frames."""
    columns = np.asarray(columns, dtype=float)
    if columns.ndim == 1:
        columns = columns[:, None]
    if columns.shape[0] != N_FEATURES * n_steps:
        raise DimensionMismatchError(f"expected {N_FEATURES * n_steps} rows, got {columns.shape[0]}")
    return columns.T.reshape(-1, N_FEATURES)


def trajectory_error_table(
    real,
    recreated,
    offsets: OffsetSpec,
    n_steps: int,
    title: str = "Reconstruction error",
    object_label: str = "unknown",
) -> ErrorTable:
    """Compare offset-representation columns (or single vectors) frame by frame in physical units."""
    real_frames = _frames(real, n_steps) - offsets.pattern()
    recreated_frames = _frames(recreated, n_steps) - offsets.pattern()
    if real_frames.shape != recreated_frames.shape:
        raise DimensionMismatchError("real and recreated data have different shapes")

    rows = []
    diff = recreated_frames - real_frames
    tips = diff[:, FINGERTIP_SLICE].reshape(-1, N_FINGERS, 3)
    for i, finger in enumerate(FINGERS):
        rows.append(_stat(finger.capitalize(), "mm", 1000.0 * np.linalg.norm(tips[:, i], axis=1)))
    rows.append(_stat("Object", "mm", 1000.0 * np.linalg.norm(diff[:, OBJECT_POSITION_SLICE], axis=1)))
    orientation = _wrap_angle(diff[:, OBJECT_ORIENTATION_SLICE])
    for j, angle in enumerate(ANGLES):
        rows.append(_stat(angle.capitalize(), "rad", orientation[:, j]))
    return ErrorTable(title=title, object_label=object_label, rows=rows)


def column_endpoints(v: DemoMatrix, j: int):
    """Physical first and last frames of column j."""
    pattern = v.offsets.pattern()
    first = Frame.from_vector(v.v[:N_FEATURES, j] - pattern)
    last = Frame.from_vector(v.v[-N_FEATURES:, j] - pattern)
    return first, last


def generation_error_table(
    d: Dictionary,
    v: DemoMatrix,
    lambda_: float = 1.0,
    velocity_bounds: Optional[VelocityBounds] = None,
    title: str = "Held-out generation error",
    object_label: str = "unknown",
) -> ErrorTable:
    """Regenerate every column of V from its two endpoint frames and compare the whole trajectory.

    Only the 42 endpoint values of a column reach the solver; the remaining
    steps come from the dictionary.
    """
    if v.n_steps != d.n_steps or not np.allclose(v.offsets.pattern(), d.offsets.pattern()):
        raise DimensionMismatchError(
            "Columns and dictionary disagree on steps or offsets",
            details=f"columns N={v.n_steps}, dictionary N={d.n_steps}",
        )
    bounds = velocity_bounds or VelocityBounds(enabled=False)
    service = GenerationService(d)
    recreated = np.zeros_like(v.v)
    for j in range(v.m):
        first, last = column_endpoints(v, j)
        request = GenerationRequest(
            initial=first, final=last, lambda_=lambda_, velocity_bounds=bounds, infeasible_residual=None
        )
        recreated[:, j] = d.w @ service.generate(request).h.h
    logger.info(f"Regenerated {v.m} columns from their endpoints (λ={lambda_})")
    return trajectory_error_table(v.v, recreated, v.offsets, v.n_steps, title=title, object_label=object_label)


def endpoint_error(res: GenerationResult, req: GenerationRequest, object_label: str = "unknown") -> ErrorTable:
    """Achieved minus requested object pose at the final frame."""
    return final_pose_error(res.trajectory.frame(-1), req.final, object_label)


def final_pose_error(achieved_frame: Frame, requested_frame: Frame, object_label: str = "unknown") -> ErrorTable:
    achieved = achieved_frame.to_vector()
    requested = requested_frame.to_vector()
    translation = 1000.0 * (achieved[OBJECT_POSITION_SLICE] - requested[OBJECT_POSITION_SLICE])
    rotation = np.degrees(_wrap_angle(achieved[OBJECT_ORIENTATION_SLICE] - requested[OBJECT_ORIENTATION_SLICE]))

    rows = [_stat(f"translation_{axis}", "mm", translation[j]) for j, axis in enumerate(AXES)]
    rows += [_stat(f"rotation_{axis}", "deg", rotation[j]) for j, axis in enumerate(AXES)]
    return ErrorTable(title="Endpoint error", object_label=object_label, rows=rows)


def summarize_endpoint_errors(families: Dict[str, List[ErrorTable]], object_label: str = "unknown") -> ErrorTable:
    """Mean and [min, max] of the signed error each motion family is judged on."""
    rows = []
    for family, tables in families.items():
        if family not in FAMILY_ROWS:
            raise ValidationError(f"Unknown motion family '{family}'", details=f"expected one of {list(FAMILY_ROWS)}")
        row = FAMILY_ROWS[family]
        values = [table.row(row).mean for table in tables]
        unit = tables[0].row(row).unit if tables else ("deg" if row.startswith("rotation") else "mm")
        rows.append(_stat(family, unit, np.asarray(values)))
    return ErrorTable(title="Pose error", object_label=object_label, rows=rows)


def bench_generate(
    d: Dictionary,
    requests: Sequence[GenerationRequest],
    warmup: int = 1,
    instances: Optional[List[str]] = None,
) -> BenchReport:
    """Wall time of GenerationService.generate per request; warm-up calls are not recorded."""
    if not requests:
        raise ValidationError("bench_generate needs at least one request")
    if len(requests) < MIN_BENCH_REQUESTS:
        logger.warning(f"Benchmarking {len(requests)} requests; at least {MIN_BENCH_REQUESTS} give stable statistics")

    service = GenerationService(d)
    for req in list(requests)[:warmup]:
        _timed_generate(service, req)

    wall_times = [_timed_generate(service, req) for req in requests]
    report = BenchReport(
        wall_times_ms=wall_times,
        median_ms=float(np.median(wall_times)),
        max_ms=float(np.max(wall_times)),
        n_samples=len(wall_times),
        warmup=warmup,
        instances=instances or [f"l={d.n_primitives} N={d.n_steps} request={i}" for i in range(len(requests))],
    )
    logger.info(f"generate: median {report.median_ms:.1f} ms, max {report.max_ms:.1f} ms over {report.n_samples} calls")
    return report


def _timed_generate(service, req: GenerationRequest) -> float:
    started = time.perf_counter()
    try:
        service.generate(req)
    except InfeasibleError:
        # Still a complete solve; the time counts
        pass
    return (time.perf_counter() - started) * 1000.0


def emit_plot_data(report: ConstraintReport, path: Optional[str] = None) -> pd.DataFrame:
    """Two columns, time_s and contact_count; written as CSV when a path is given."""
    steps = np.arange(report.n_steps)
    data = pd.DataFrame({
        "time_s": np.round(steps * report.dt, 9),
        "contact_count": np.asarray(report.contact_count, dtype=int),
    })
    if path:
        data.to_csv(path, index=False)
        logger.debug(f"Wrote contact-count plot data to {path}")
    return data
