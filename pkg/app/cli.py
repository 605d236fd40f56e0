"""
Command-line front end.

Every subcommand reads an optional --config YAML (PipelineConfig) and lets
flags override it. Exit codes: 0 success, 1 usage or validation error,
2 constraint violations found, 3 solver infeasible.
"""
import functools
import logging
import sys
from pathlib import Path
from typing import Optional

import click
import yaml
from pydantic import ValidationError as SchemaValidationError

from app.core.config import settings
from app.core.exceptions import BaseAppException, InfeasibleError
from app.core.types import ObjectShape
from app.schemas.dictionary import NmfConfig
from app.schemas.generation import GenerationRequest, VelocityBounds
from app.schemas.pipeline import PipelineConfig
from app.schemas.trajectory import OffsetSpec
from app.schemas.verification import ObjectModel, Workspace
from app.services import storage_service as storage
from app.services.constraint_service import verify as verify_trajectory
from app.services.evaluation_service import (
    bench_generate,
    column_endpoints,
    emit_plot_data,
    final_pose_error,
    generation_error_table,
    trajectory_error_table,
)
from app.services.generation_service import GenerationService
from app.services.nmf_service import NmfService
from app.services.pipeline_service import run_pipeline, write_synthetic_demos
from app.services.preprocess_service import PreprocessService
from app.utils.audit import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATIONS = 2
EXIT_INFEASIBLE = 3

OBJECT_CHOICE = click.Choice([shape.value for shape in ObjectShape])


class CliError(click.ClickException):
    def __init__(self, message: str, exit_code: int = EXIT_USAGE):
        super().__init__(message)
        self.exit_code = exit_code


class CommandGroup(click.Group):
    """Runs commands in non-standalone mode so usage errors exit 1 and return values become exit codes."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var, standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else EXIT_OK
        except click.UsageError as e:
            e.show()
            code = EXIT_USAGE
        except click.ClickException as e:
            e.show()
            code = e.exit_code
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = EXIT_USAGE
        if standalone_mode:
            sys.exit(code)
        return code


def handle_errors(func):
    """Turn domain and input errors into a one-line message and exit code 1."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except BaseAppException as e:
            detail = f" ({e.details})" if e.details else ""
            raise CliError(f"{e.message}{detail}") from e
        except (SchemaValidationError, yaml.YAMLError, OSError) as e:
            raise CliError(str(e)) from e
    return wrapper


def load_config(config_path: Optional[str], objects=None, **sections) -> PipelineConfig:
    """YAML config (or defaults) with flag overrides; None-valued flags leave the file value alone."""
    cfg = PipelineConfig.from_yaml(config_path) if config_path else PipelineConfig()
    updates = {}
    for name, values in sections.items():
        values = {key: value for key, value in values.items() if value is not None}
        if values:
            current = getattr(cfg, name)
            updates[name] = type(current).model_validate({**current.model_dump(), **values})
    if objects:
        updates["objects"] = [ObjectShape(o) for o in objects]
    return cfg.model_copy(update=updates) if updates else cfg


config_option = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Pipeline YAML")


@click.group(cls=CommandGroup)
@click.option("--log-level", default=None, help="Overrides LOG_LEVEL")
def cli(log_level):
    """Motion primitive dictionaries for in-hand manipulation."""
    configure_logging(log_level or settings.LOG_LEVEL, settings.AUDIT_LOG)


@cli.command()
@click.option("--object", "object_name", type=OBJECT_CHOICE, default=None)
@click.option("--minutes", type=float, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--noise", type=float, default=None, help="Fingertip noise std (m)")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@config_option
@handle_errors
def synth(object_name, minutes, trials, seed, noise, out_dir, config_path):
    """Write synthetic recordings and their scripts."""
    cfg = load_config(
        config_path,
        objects=[object_name] if object_name else None,
        synth={"minutes": minutes, "trials": trials, "seed": seed, "noise_std": noise},
    )
    obj = ObjectModel.named(cfg.objects[0].value, surface_resolution=cfg.verification.surface_resolution)
    train, test = write_synthetic_demos(obj, cfg.synth, Path(out_dir))
    click.echo(f"{len(train)} train / {len(test)} test recordings in {out_dir}")
    return EXIT_OK


def _recording_paths(paths):
    found = []
    for item in paths:
        item = Path(item)
        found.extend(sorted(item.glob("*.csv")) if item.is_dir() else [item])
    if not found:
        raise CliError("No recording CSVs given")
    return found


@cli.command()
@click.option("--recordings", multiple=True, type=click.Path(exists=True), required=True, help="CSV files or directories")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--cutoff", type=float, default=None, help="Low-pass cutoff (Hz)")
@click.option("--max-gap", type=float, default=None, help="Longest interpolated gap (s)")
@click.option("--sidecar/--embedded", default=True, help="Store the matrix as a float64 sidecar file")
@config_option
@handle_errors
def preprocess(recordings, out_path, cutoff, max_gap, sidecar, config_path):
    """Build the training matrix V from recordings."""
    cfg = load_config(config_path, preprocess={"cutoff_hz": cutoff, "max_gap_s": max_gap})
    service = PreprocessService(max_gap_s=cfg.preprocess.max_gap_s, cutoff_hz=cfg.preprocess.cutoff_hz)
    offsets = OffsetSpec(position_offset=cfg.preprocess.position_offset, orientation_offset=cfg.preprocess.orientation_offset)
    loaded = [storage.read_recording_csv(p) for p in _recording_paths(recordings)]
    demo = service.build_demo_matrix(loaded, offsets)
    storage.save_matrix(demo, out_path, sidecar=sidecar)
    click.echo(f"V: {demo.n} x {demo.m} -> {out_path}")
    return EXIT_OK


@cli.command()
@click.option("--demos", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--test-demos", type=click.Path(exists=True, dir_okay=False), default=None, help="Held-out matrix for the report")
@click.option("--primitives", type=int, default=None)
@click.option("--max-iters", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--update-rule", type=click.Choice(["multiplicative", "hals"]), default=None)
@click.option("--object", "object_name", type=OBJECT_CHOICE, default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@config_option
@handle_errors
def train(demos, test_demos, primitives, max_iters, seed, update_rule, object_name, out_path, report_path, config_path):
    """Factorize V into a primitive dictionary."""
    cfg = load_config(
        config_path,
        objects=[object_name] if object_name else None,
        nmf={"n_primitives": primitives, "max_iters": max_iters, "seed": seed, "update_rule": update_rule},
    )
    v = storage.load_demo_matrix(demos, expected_n_steps=settings.N_STEPS)
    service = NmfService(
        NmfConfig(
            n_primitives=cfg.nmf.n_primitives,
            max_iters=cfg.nmf.max_iters,
            rel_tol=cfg.nmf.rel_tol,
            rng_seed=cfg.nmf.seed,
            update_rule=cfg.nmf.update_rule,
        ),
        progress=True,
    )
    result = service.factorize(v, object_label=cfg.objects[0].value)
    storage.save_matrix(result.dictionary, out_path, sidecar=True)
    held_out = storage.load_demo_matrix(test_demos, expected_n_steps=settings.N_STEPS) if test_demos else None
    report = NmfService.training_report(result, v, held_out, lambda_=cfg.generation.lambda_)
    report_path = report_path or str(Path(out_path).with_suffix(".report.json"))
    storage.write_model_json(report, report_path)
    click.echo(report.train.to_markdown())
    return EXIT_OK


@cli.command()
@click.option("--dict", "dict_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--initial", type=click.Path(exists=True, dir_okay=False), required=True, help="Single-frame CSV")
@click.option("--final", type=click.Path(exists=True, dir_okay=False), required=True, help="Single-frame CSV")
@click.option("--lambda", "lambda_", type=float, default=None)
@click.option("--vmax", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--stats", "stats_path", type=click.Path(dir_okay=False), default=None)
@config_option
@handle_errors
def generate(dict_path, initial, final, lambda_, vmax, out_path, stats_path, config_path):
    """Generate a trajectory between two frames."""
    cfg = load_config(config_path, generation={"lambda_": lambda_, "v_max": vmax})
    dictionary = storage.load_dictionary(dict_path, expected_n_steps=settings.N_STEPS)
    request = GenerationRequest(
        initial=storage.read_frame_csv(initial),
        final=storage.read_frame_csv(final),
        lambda_=cfg.generation.lambda_,
        velocity_bounds=VelocityBounds(v_max=cfg.generation.v_max),
        infeasible_residual=cfg.generation.infeasible_residual,
    )
    code = EXIT_OK
    try:
        result = GenerationService(dictionary).generate(request)
    except InfeasibleError as e:
        click.echo(f"Infeasible: {e.message}; writing the best feasible trajectory", err=True)
        result = e.result
        code = EXIT_INFEASIBLE

    storage.write_trajectory_csv(result.trajectory, out_path)
    stats_path = stats_path or str(Path(out_path).with_suffix(".stats.json"))
    storage.write_model_json(result.solve_stats, stats_path, exclude={"wall_time_ms"})
    click.echo(f"Endpoint residual {result.residual_norm:.4g}, objective {result.solve_stats.objective:.4g}")
    return code


@cli.command()
@click.option("--traj", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--object", "object_name", type=OBJECT_CHOICE, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--dmin", type=float, default=None)
@click.option("--workspace", "workspace_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--plot-data", "plot_path", type=click.Path(dir_okay=False), default=None, help="time/contact-count CSV")
@config_option
@handle_errors
def verify(traj, object_name, tau, dmin, workspace_path, out_path, plot_path, config_path):
    """Check reachability, collisions and contacts; exit 2 on any violation."""
    cfg = load_config(
        config_path,
        objects=[object_name] if object_name else None,
        verification={"tau": tau, "d_min": dmin},
    )
    trajectory = storage.read_trajectory_csv(traj)
    obj = ObjectModel.named(cfg.objects[0].value, surface_resolution=cfg.verification.surface_resolution)
    workspace_path = workspace_path or settings.WORKSPACE_PATH
    workspace = storage.read_model_json(Workspace, workspace_path) if workspace_path else None

    report = verify_trajectory(trajectory, obj, cfg.verification.tau, cfg.verification.d_min, workspace)
    storage.write_model_json(report, out_path)
    if plot_path:
        emit_plot_data(report, plot_path)
    click.echo(
        f"{report.n_steps} steps, {len(report.violations)} violations, "
        f"gaiting {'detected' if report.gaiting_detected else 'not detected'}"
    )
    return EXIT_OK if report.passed else EXIT_VIOLATIONS


@cli.command()
@click.option("--dict", "dict_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--demos", type=click.Path(exists=True, dir_okay=False), default=None, help="Matrix to reconstruct")
@click.option(
    "--method",
    type=click.Choice(["generate", "encode"]),
    default="generate",
    show_default=True,
    help="generate: activations from each column's endpoint frames; encode: least squares on the full column",
)
@click.option("--traj", type=click.Path(exists=True, dir_okay=False), default=None, help="Generated trajectory")
@click.option("--final", type=click.Path(exists=True, dir_okay=False), default=None, help="Requested final frame")
@click.option("--object", "object_name", type=OBJECT_CHOICE, default=None)
@click.option("--lambda", "lambda_", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@config_option
@handle_errors
def evaluate(dict_path, demos, method, traj, final, object_name, lambda_, out_path, config_path):
    """Reconstruction table (--dict + --demos) or endpoint table (--traj + --final)."""
    cfg = load_config(
        config_path,
        objects=[object_name] if object_name else None,
        generation={"lambda_": lambda_},
    )
    label = cfg.objects[0].value
    if dict_path and demos:
        dictionary = storage.load_dictionary(dict_path, expected_n_steps=settings.N_STEPS)
        v = storage.load_demo_matrix(demos, expected_n_steps=settings.N_STEPS)
        if method == "generate":
            table = generation_error_table(dictionary, v, lambda_=cfg.generation.lambda_, object_label=label)
        else:
            h = NmfService.encode_columns(dictionary, v.v)
            table = trajectory_error_table(v.v, dictionary.w @ h, v.offsets, v.n_steps, object_label=label)
        text = table.to_markdown()
    elif traj and final:
        achieved = storage.read_trajectory_csv(traj).frame(-1)
        table = final_pose_error(achieved, storage.read_frame_csv(final), object_label=label)
        text = table.to_markdown(with_range=True)
    else:
        raise click.UsageError("Give --dict with --demos, or --traj with --final")
    if out_path:
        storage.write_model_json(table, out_path)
    click.echo(text)
    return EXIT_OK


@cli.command()
@click.option("--dict", "dict_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--demos", type=click.Path(exists=True, dir_okay=False), required=True, help="Segments whose endpoints become requests")
@click.option("--count", type=int, default=20, show_default=True)
@click.option("--vmax", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@config_option
@handle_errors
def bench(dict_path, demos, count, vmax, out_path, config_path):
    """Time trajectory generation (Cartesian only)."""
    cfg = load_config(config_path, generation={"v_max": vmax})
    dictionary = storage.load_dictionary(dict_path, expected_n_steps=settings.N_STEPS)
    v = storage.load_demo_matrix(demos, expected_n_steps=settings.N_STEPS)
    endpoints = [column_endpoints(v, j) for j in range(v.m)]
    bounds = VelocityBounds(v_max=cfg.generation.v_max)
    requests = [
        GenerationRequest(
            initial=endpoints[i % v.m][0],
            final=endpoints[i % v.m][1],
            lambda_=cfg.generation.lambda_,
            velocity_bounds=bounds,
            infeasible_residual=cfg.generation.infeasible_residual,
        )
        for i in range(count)
    ]
    report = bench_generate(dictionary, requests)
    if out_path:
        storage.write_model_json(report, out_path)
    click.echo(f"median {report.median_ms:.1f} ms, max {report.max_ms:.1f} ms over {report.n_samples} calls")
    return EXIT_OK


@cli.command()
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.option("--demo-dir", type=click.Path(file_okay=False), default=None, help="Use recordings instead of synthesizing")
@click.option("--objects", multiple=True, type=OBJECT_CHOICE)
@click.option("--seed", type=int, default=None)
@config_option
@handle_errors
def pipeline(out_dir, demo_dir, objects, seed, config_path):
    """synth -> preprocess -> train -> generate -> verify -> evaluate, with a hashed manifest."""
    cfg = load_config(
        config_path,
        objects=list(objects) or None,
        paths={"out_dir": out_dir, "demo_dir": demo_dir},
        synth={"seed": seed},
        nmf={"seed": seed},
    )
    summary = run_pipeline(cfg, progress=True)
    for item in summary.objects:
        click.echo(
            f"{item.object_label}: {item.trajectories} trajectories ({item.infeasible} infeasible), "
            f"reachability {item.reachability_pass_rate:.1%}, contacts {item.contact_pass_rate:.1%}, "
            f"{item.collision_steps} colliding steps"
        )
    click.echo(f"manifest: {summary.manifest}")
    return EXIT_OK


def main():
    cli(prog_name="hand-primitives")


if __name__ == "__main__":
    main()
