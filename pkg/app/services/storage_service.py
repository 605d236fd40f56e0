"""
File formats: trajectory/frame/recording CSVs, the matrix container used for
dictionaries and demonstration matrices, pydantic JSON documents and the
artifact manifest.
"""
import hashlib
import io
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Type, TypeVar, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.core.exceptions import (
    DimensionMismatchError,
    NonNegativityViolatedError,
    NotFoundError,
    ValidationError,
)
from app.core.types import FEATURE_COLUMNS, RECORDING_COLUMNS, TIME_COLUMN, TRAJECTORY_COLUMNS
from app.schemas.dictionary import Dictionary, Provenance
from app.schemas.recording import DemoMatrix, Recording
from app.schemas.trajectory import Frame, OffsetSpec, Trajectory

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FLOAT_FORMAT = "%.17g"
SIDECAR_SUFFIX = ".f64"

PathLike = Union[str, Path]
ModelT = TypeVar("ModelT", bound=BaseModel)


def _read_csv(path: PathLike, columns: List[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"File not found: {path}")
    data = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in columns if c not in data.columns]
    if missing:
        raise ValidationError(f"{path.name} is missing columns", details=", ".join(missing))
    return data


def _ensure_parent(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_trajectory_csv(t: Trajectory, path: PathLike) -> Path:
    path = _ensure_parent(path)
    data = pd.DataFrame(t.features, columns=FEATURE_COLUMNS)
    data.insert(0, TIME_COLUMN, np.round(t.times, 9))
    data.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_trajectory_csv(path: PathLike, dt: Optional[float] = None) -> Trajectory:
    data = _read_csv(path, TRAJECTORY_COLUMNS)
    if dt is None:
        times = data[TIME_COLUMN].to_numpy(dtype=float)
        if times.shape[0] < 2:
            raise ValidationError(f"{Path(path).name} needs at least two rows")
        dt = float(np.median(np.diff(times)))
    try:
        return Trajectory(features=data[FEATURE_COLUMNS].to_numpy(dtype=float), dt=dt)
    except ValueError as e:
        raise ValidationError(f"Invalid trajectory in {Path(path).name}", details=str(e))


def write_frame_csv(frame: Frame, path: PathLike) -> Path:
    path = _ensure_parent(path)
    data = pd.DataFrame([frame.to_vector()], columns=FEATURE_COLUMNS)
    data.insert(0, TIME_COLUMN, 0.0)
    data.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_frame_csv(path: PathLike) -> Frame:
    """A single-row CSV with the trajectory header; the time column is optional."""
    data = _read_csv(path, FEATURE_COLUMNS)
    if len(data) != 1:
        raise ValidationError(f"{Path(path).name} must hold exactly one frame, found {len(data)} rows")
    values = data[FEATURE_COLUMNS].to_numpy(dtype=float)[0]
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{Path(path).name} has missing or non-finite values")
    return Frame.from_vector(values)


def write_recording_csv(r: Recording, path: PathLike) -> Path:
    path = _ensure_parent(path)
    r.samples.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    return path


def read_recording_csv(path: PathLike, sample_rate_hz: Optional[float] = None) -> Recording:
    data = _read_csv(path, RECORDING_COLUMNS)
    fields = {"source": Path(path).stem}
    if sample_rate_hz is None and len(data) >= 2:
        sample_rate_hz = 1.0 / float(np.median(np.diff(data[TIME_COLUMN].to_numpy(dtype=float))))
    if sample_rate_hz is not None:
        fields["sample_rate_hz"] = sample_rate_hz
    try:
        return Recording(samples=data, **fields)
    except ValueError as e:
        raise ValidationError(f"Invalid recording in {Path(path).name}", details=str(e))


def sha256_bytes(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _encode_payload(array: np.ndarray, path: Path, sidecar: bool) -> dict:
    if not sidecar:
        buffer = io.StringIO()
        np.savetxt(buffer, array, delimiter=",", fmt=FLOAT_FORMAT)
        return {"encoding": "csv", "data": buffer.getvalue()}
    raw = np.ascontiguousarray(array, dtype="<f8").tobytes()
    sidecar_path = path.with_suffix(SIDECAR_SUFFIX)
    sidecar_path.write_bytes(raw)
    return {"encoding": "f64le", "path": sidecar_path.name, "sha256": sha256_bytes(raw)}


def _decode_payload(payload: dict, shape, path: Path) -> np.ndarray:
    encoding = payload.get("encoding")
    rows, cols = shape
    if encoding == "csv":
        array = np.loadtxt(io.StringIO(payload.get("data", "")), delimiter=",", ndmin=2)
        if array.size == 0:
            array = array.reshape(rows, cols)
    elif encoding == "f64le":
        sidecar_path = path.parent / payload["path"]
        if not sidecar_path.is_file():
            raise NotFoundError(f"Matrix sidecar not found: {sidecar_path}")
        raw = sidecar_path.read_bytes()
        if sha256_bytes(raw) != payload.get("sha256"):
            raise ValidationError(f"Checksum mismatch for {sidecar_path.name}", error_code="checksum_mismatch")
        if len(raw) != rows * cols * 8:
            raise DimensionMismatchError(f"{sidecar_path.name} holds {len(raw) // 8} values, expected {rows * cols}")
        array = np.frombuffer(raw, dtype="<f8").reshape(rows, cols)
    else:
        raise ValidationError(f"Unknown matrix payload encoding '{encoding}'")
    if array.shape != (rows, cols):
        raise DimensionMismatchError(f"Matrix payload has shape {array.shape}, header says {(rows, cols)}")
    if not np.all(np.isfinite(array)) or np.any(array < 0):
        raise NonNegativityViolatedError(f"Matrix in {path.name} has negative or non-finite entries")
    return array.astype(float)


def save_matrix(item: Union[Dictionary, DemoMatrix], path: PathLike, sidecar: bool = False) -> Path:
    """Write a dictionary or demonstration matrix container; `sidecar` stores the matrix as raw float64."""
    path = _ensure_parent(path)
    if isinstance(item, Dictionary):
        array = item.w
        document = {
            "format_version": FORMAT_VERSION,
            "kind": "dictionary",
            "shape": list(array.shape),
            "n_steps": item.n_steps,
            "dt": item.dt,
            "offsets": item.offsets.model_dump(),
            "provenance": item.provenance.model_dump(),
        }
    else:
        array = item.v
        document = {
            "format_version": FORMAT_VERSION,
            "kind": "demo_matrix",
            "shape": list(array.shape),
            "n_steps": item.n_steps,
            "offsets": item.offsets.model_dump(),
            "segment_sources": list(item.segment_sources),
        }
    document["payload"] = _encode_payload(array, path, sidecar)
    path.write_text(json.dumps(document, indent=2), encoding="utf-8")
    logger.info(f"Saved {document['kind']} {array.shape[0]}x{array.shape[1]} to {path}")
    return path


def _load_container(path: PathLike, kind: str, expected_n_steps: Optional[int]):
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"File not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path.name} is not valid JSON", details=str(e))
    if document.get("format_version") != FORMAT_VERSION:
        raise ValidationError(
            f"Unsupported matrix format version {document.get('format_version')!r}",
            error_code="unsupported_version",
        )
    if document.get("kind") != kind:
        raise ValidationError(f"{path.name} holds a {document.get('kind')!r}, expected {kind!r}")
    n_steps = int(document["n_steps"])
    if expected_n_steps is not None and n_steps != expected_n_steps:
        raise DimensionMismatchError(f"{path.name} has N={n_steps}, configured N={expected_n_steps}")
    array = _decode_payload(document["payload"], document["shape"], path)
    return document, array


def load_dictionary(path: PathLike, expected_n_steps: Optional[int] = None) -> Dictionary:
    document, w = _load_container(path, "dictionary", expected_n_steps)
    try:
        return Dictionary(
            w=w,
            n_steps=document["n_steps"],
            n_primitives=w.shape[1],
            dt=document["dt"],
            offsets=OffsetSpec(**document["offsets"]),
            provenance=Provenance(**document.get("provenance", {})),
        )
    except ValueError as e:
        raise DimensionMismatchError(f"Invalid dictionary in {Path(path).name}", details=str(e))


def load_demo_matrix(path: PathLike, expected_n_steps: Optional[int] = None) -> DemoMatrix:
    document, v = _load_container(path, "demo_matrix", expected_n_steps)
    try:
        return DemoMatrix(
            v=v,
            n_steps=document["n_steps"],
            offsets=OffsetSpec(**document["offsets"]),
            segment_sources=document.get("segment_sources", []),
        )
    except ValueError as e:
        raise DimensionMismatchError(f"Invalid demonstration matrix in {Path(path).name}", details=str(e))


def write_model_json(model: BaseModel, path: PathLike, exclude=None) -> Path:
    path = _ensure_parent(path)
    path.write_text(model.model_dump_json(indent=2, exclude=exclude), encoding="utf-8")
    return path


def read_model_json(model_cls: Type[ModelT], path: PathLike) -> ModelT:
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"File not found: {path}")
    try:
        return model_cls.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise ValidationError(f"Invalid {model_cls.__name__} in {path.name}", details=str(e))


def write_manifest(root: PathLike, files: Iterable[PathLike], path: PathLike) -> Path:
    """Sorted {path, sha256, bytes} entries, paths relative to root."""
    root = Path(root)
    entries = []
    for item in files:
        item = Path(item)
        entries.append({
            "path": item.relative_to(root).as_posix(),
            "sha256": sha256_file(item),
            "bytes": item.stat().st_size,
        })
    entries.sort(key=lambda e: e["path"])
    path = _ensure_parent(path)
    path.write_text(json.dumps({"artifacts": entries}, indent=2), encoding="utf-8")
    return path
