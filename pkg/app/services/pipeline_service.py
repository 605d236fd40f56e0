"""
End-to-end run per object: demonstrations -> preprocess -> train -> workspace
-> scripted generation requests -> verification -> evaluation -> manifest.

A composite rotate, slide and return sequence is generated next to the
scripted requests. Artifacts are laid out under <out_dir>/<object>/ and
hashed into <out_dir>/manifest.json. No wall times or timestamps are
written to disk.
"""
import contextlib
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from app.core.config import settings
from app.core.exceptions import BaseAppException, InfeasibleError, NotFoundError, PipelineStageError
from app.core.types import (
    FINGERTIP_SLICE,
    N_FINGERS,
    OBJECT_ORIENTATION_SLICE,
    OBJECT_POSITION_SLICE,
    ObjectShape,
)
from app.schemas.dictionary import NmfConfig
from app.schemas.generation import GenerationRequest, VelocityBounds
from app.schemas.pipeline import GenerationSection, ObjectSummary, PipelineConfig, PipelineSummary, SynthSection
from app.schemas.recording import DemoMatrix, Recording
from app.schemas.trajectory import Frame, OffsetSpec, Trajectory
from app.schemas.verification import ObjectModel
from app.services import storage_service as storage
from app.services.constraint_service import fit_workspace, verify
from app.services.evaluation_service import column_endpoints, emit_plot_data, endpoint_error, summarize_endpoint_errors
from app.services.generation_service import GenerationService
from app.services.nmf_service import NmfService
from app.services.preprocess_service import PreprocessService, stack_demo_matrices
from app.services.synth_service import random_script, split_recordings, synthesize
from app.utils.audit import audit
from app.utils.geometry import AXIS_VECTORS, axis_rotation, rotation_from_rpy, rpy_from_rotation

logger = logging.getLogger(__name__)

FAMILIES = ("x-rotation", "y-rotation", "y-translation")
MANIFEST_NAME = "manifest.json"


@contextlib.contextmanager
def pipeline_stage(stage: str, object_label: str):
    """Label any failure inside the block with the stage it happened in."""
    logger.info(f"▶ {object_label}: {stage}")
    try:
        yield
    except PipelineStageError:
        raise
    except (BaseAppException, OSError, ValueError) as e:
        logger.error(f"❌ {object_label}: {stage} failed: {e}")
        raise PipelineStageError(stage, e) from e
    audit("pipeline.stage", object=object_label, stage=stage)


def transformed_frame(frame: Frame, rotation_axis: Optional[str] = None, angle: float = 0.0, translation=None) -> Frame:
    """Rigidly move object and fingertips together: rotate about the object center, then translate."""
    v = frame.to_vector()
    center = v[OBJECT_POSITION_SLICE].copy()
    tips = v[FINGERTIP_SLICE].reshape(N_FINGERS, 3)
    orientation = v[OBJECT_ORIENTATION_SLICE]
    if rotation_axis is not None:
        rotation = axis_rotation(rotation_axis, angle)
        tips = rotation.apply(tips - center) + center
        orientation = rpy_from_rotation(rotation * rotation_from_rpy(orientation))
    if translation is not None:
        tips = tips + np.asarray(translation, dtype=float)
        center = center + np.asarray(translation, dtype=float)
    return Frame.from_vector(np.concatenate([tips.reshape(-1), center, orientation]))


def scripted_requests(
    initial_frames: Sequence[Frame],
    section: GenerationSection,
) -> List[Tuple[str, str, GenerationRequest]]:
    """(name, family, request) for evenly spaced x/y rotations and y translations from recorded frames."""
    if not initial_frames:
        raise NotFoundError("No recorded frames to start generation requests from")
    per_family = section.requests_per_family
    angles = np.radians(np.linspace(*section.rotation_range_deg, per_family))
    shifts = np.linspace(*section.translation_range_m, per_family)
    bounds = VelocityBounds(v_max=section.v_max)

    requests = []
    for f, family in enumerate(FAMILIES):
        for k in range(per_family):
            initial = initial_frames[(f * per_family + k) % len(initial_frames)]
            if family == "x-rotation":
                final = transformed_frame(initial, "x", float(angles[k]))
            elif family == "y-rotation":
                final = transformed_frame(initial, "y", float(angles[k]))
            else:
                final = transformed_frame(initial, translation=shifts[k] * AXIS_VECTORS["y"])
            request = GenerationRequest(
                initial=initial,
                final=final,
                lambda_=section.lambda_,
                velocity_bounds=bounds,
                infeasible_residual=section.infeasible_residual,
            )
            requests.append((f"{family}_{k:02d}", family, request))
    return requests


def write_synthetic_demos(
    obj: ObjectModel,
    section: SynthSection,
    root: Path,
    index: int = 0,
) -> Tuple[List[Recording], List[Recording]]:
    """Synthesize section.trials scripts, split them and write recording CSVs with script sidecars under root/demos."""
    trial_seconds = section.minutes * 60.0 / section.trials
    scripts = [
        random_script(obj, seed=section.seed + 100 * index + i, duration=trial_seconds, noise_std=section.noise_std)
        for i in range(section.trials)
    ]
    recordings = [synthesize(script) for script in scripts]
    train, test = split_recordings(recordings, section.split, seed=section.seed + index)

    by_source = {r.source: s for r, s in zip(recordings, scripts)}
    for split_name, items in (("train", train), ("test", test)):
        for recording in items:
            folder = Path(root) / "demos" / split_name
            storage.write_recording_csv(recording, folder / f"{recording.source}.csv")
            storage.write_model_json(by_source[recording.source], folder / f"{recording.source}.script.json")
    logger.info(f"Wrote {len(train)} train / {len(test)} test synthetic recordings to {root}")
    return train, test


def segment_start_frames(v: DemoMatrix) -> List[Frame]:
    return [column_endpoints(v, j)[0] for j in range(v.m)]


class PipelineService:
    """Runs the full demonstration-to-verification pipeline for every configured object"""

    def __init__(self, cfg: PipelineConfig, progress: bool = False):
        self.cfg = cfg
        self.progress = progress
        self.out_dir = Path(cfg.paths.out_dir)
        self.offsets = OffsetSpec(
            position_offset=cfg.preprocess.position_offset,
            orientation_offset=cfg.preprocess.orientation_offset,
        )
        self.preprocess = PreprocessService(
            n_steps=settings.N_STEPS,
            max_gap_s=cfg.preprocess.max_gap_s,
            cutoff_hz=cfg.preprocess.cutoff_hz,
        )

    def _load_demos(self, shape: ObjectShape) -> Tuple[List[Recording], List[Recording]]:
        demo_dir = Path(self.cfg.paths.demo_dir) / shape.value
        if not demo_dir.is_dir():
            raise NotFoundError(f"Demonstration directory not found: {demo_dir}")
        paths = sorted(demo_dir.glob("*.csv"))
        if not paths:
            raise NotFoundError(f"No recording CSVs in {demo_dir}")
        recordings = [storage.read_recording_csv(p) for p in paths]
        return split_recordings(recordings, self.cfg.synth.split, seed=self.cfg.synth.seed)

    def _matrix(self, pieces: Sequence[Recording]) -> DemoMatrix:
        return stack_demo_matrices(
            [self.preprocess.segment(p, self.offsets) for p in pieces],
            n_steps=self.preprocess.n_steps,
            offsets=self.offsets,
        )

    def run_object(self, shape: ObjectShape, index: int = 0) -> ObjectSummary:
        label = shape.value
        root = self.out_dir / label
        cfg = self.cfg
        obj = ObjectModel(shape=shape, surface_resolution=cfg.verification.surface_resolution)

        with pipeline_stage("synth", label):
            if cfg.paths.demo_dir:
                train, test = self._load_demos(shape)
            else:
                train, test = write_synthetic_demos(obj, cfg.synth, root, index)

        with pipeline_stage("preprocess", label):
            train_pieces = [p for r in train for p in self.preprocess.prepare(r)]
            test_pieces = [p for r in test for p in self.preprocess.prepare(r)]
            v_train = self._matrix(train_pieces)
            v_test = self._matrix(test_pieces) if test_pieces else None
            storage.save_matrix(v_train, root / "demo_train.json", sidecar=True)
            if v_test is not None:
                storage.save_matrix(v_test, root / "demo_test.json", sidecar=True)

        with pipeline_stage("train", label):
            nmf = NmfService(
                NmfConfig(
                    n_primitives=cfg.nmf.n_primitives,
                    max_iters=cfg.nmf.max_iters,
                    rel_tol=cfg.nmf.rel_tol,
                    rng_seed=cfg.nmf.seed,
                    update_rule=cfg.nmf.update_rule,
                ),
                progress=self.progress,
            )
            result = nmf.factorize(v_train, object_label=label)
            dictionary = result.dictionary
            storage.save_matrix(dictionary, root / "dictionary.json", sidecar=True)
            storage.write_model_json(NmfService.training_report(result, v_train, v_test), root / "training_report.json")

        with pipeline_stage("workspace", label):
            workspace = fit_workspace(train_pieces, margin=cfg.verification.workspace_margin)
            storage.write_model_json(workspace, root / "workspace.json")

        with pipeline_stage("generate", label):
            starts = segment_start_frames(v_test if v_test is not None else v_train)
            requests = scripted_requests(starts, cfg.generation)
            service = GenerationService(dictionary)
            results = {}
            infeasible = 0
            iterator = tqdm(requests, desc=f"generate ({label})", unit="traj") if self.progress else requests
            for name, _, request in iterator:
                try:
                    res = service.generate(request)
                except InfeasibleError as e:
                    logger.warning(f"⚠️ {label}/{name}: {e.message}; keeping the best feasible trajectory")
                    res = e.result
                    infeasible += 1
                results[name] = res
                storage.write_trajectory_csv(res.trajectory, root / "trajectories" / f"{name}.csv")
                storage.write_model_json(res.solve_stats, root / "solve_stats" / f"{name}.json", exclude={"wall_time_ms"})

            composite = self._composite(service, starts[0], cfg.generation, label)
            if composite is not None:
                storage.write_trajectory_csv(composite, root / "trajectories" / "composite.csv")

        with pipeline_stage("verify", label):
            reports = {}
            for name, _, _ in requests:
                report = verify(results[name].trajectory, obj, cfg.verification.tau, cfg.verification.d_min, workspace)
                reports[name] = report
                storage.write_model_json(report, root / "reports" / f"{name}.json")
                emit_plot_data(report, str(root / "contacts" / f"{name}.csv"))
            if composite is not None:
                report = verify(composite, obj, cfg.verification.tau, cfg.verification.d_min, workspace)
                storage.write_model_json(report, root / "reports" / "composite.json")

        with pipeline_stage("evaluate", label):
            families: Dict[str, list] = {family: [] for family in FAMILIES}
            for name, family, request in requests:
                families[family].append(endpoint_error(results[name], request, object_label=label))
            pose_table = summarize_endpoint_errors(families, object_label=label)
            storage.write_model_json(pose_table, root / "endpoint_errors.json")
            (root / "endpoint_errors.md").write_text(pose_table.to_markdown(with_range=True) + "\n", encoding="utf-8")

            summary = self._summarize(label, reports, infeasible, pose_table.rows)
            storage.write_model_json(summary, root / "summary.json")

        logger.info(
            f"✅ {label}: {summary.trajectories} trajectories, reachability {summary.reachability_pass_rate:.1%}, "
            f"contacts {summary.contact_pass_rate:.1%}, {summary.collision_steps} colliding steps"
        )
        return summary

    @staticmethod
    def _composite(service: GenerationService, start: Frame, section: GenerationSection, label: str) -> Optional[Trajectory]:
        """Rotate about x, slide along y, then return to the start frame as one chained trajectory."""
        rotated = transformed_frame(start, "x", float(np.radians(section.rotation_range_deg[0])))
        moved = transformed_frame(rotated, translation=section.translation_range_m[0] * AXIS_VECTORS["y"])
        try:
            _, trajectory = service.generate_sequence(
                start,
                [rotated, moved, start],
                lambda_=section.lambda_,
                velocity_bounds=VelocityBounds(v_max=section.v_max),
            )
        except InfeasibleError as e:
            logger.warning(f"⚠️ {label}/composite: {e.message}; sequence skipped")
            return None
        return trajectory

    @staticmethod
    def _summarize(label: str, reports: dict, infeasible: int, endpoint_rows) -> ObjectSummary:
        reachable = np.concatenate([np.all(r.reachability_ok, axis=1) for r in reports.values()])
        contacts = np.concatenate([np.asarray(r.contact_count) >= 2 for r in reports.values()])
        return ObjectSummary(
            object_label=label,
            trajectories=len(reports),
            infeasible=infeasible,
            reachability_pass_rate=float(reachable.mean()),
            contact_pass_rate=float(contacts.mean()),
            collision_steps=int(sum(sum(r.collision_flags) for r in reports.values())),
            gaiting_trajectories=sum(1 for r in reports.values() if r.gaiting_detected),
            violations=sum(len(r.violations) for r in reports.values()),
            endpoint_errors=list(endpoint_rows),
        )

    def run(self) -> PipelineSummary:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        summaries = [self.run_object(shape, index) for index, shape in enumerate(self.cfg.objects)]

        manifest_path = self.out_dir / MANIFEST_NAME
        with pipeline_stage("manifest", "all"):
            files = sorted(p for p in self.out_dir.rglob("*") if p.is_file() and p != manifest_path)
            storage.write_manifest(self.out_dir, files, manifest_path)
        audit("pipeline.completed", objects=[s.object_label for s in summaries], artifacts=len(files))
        return PipelineSummary(out_dir=str(self.out_dir), manifest=str(manifest_path), objects=summaries)


def run_pipeline(cfg: PipelineConfig, progress: bool = False) -> PipelineSummary:
    return PipelineService(cfg, progress=progress).run()
