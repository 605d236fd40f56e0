import numpy as np
import pytest
from click.testing import CliRunner

from app.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, EXIT_VIOLATIONS, cli
from app.core.config import settings
from app.schemas.recording import DemoMatrix
from app.services import storage_service as storage


@pytest.fixture(autouse=True)
def quiet_audit(monkeypatch):
    monkeypatch.setattr(settings, "AUDIT_LOG", False)


@pytest.fixture
def runner():
    return CliRunner()


def test_help(runner):
    result = runner.invoke(cli, ["--help"])

    assert result.exit_code == EXIT_OK
    assert "pipeline" in result.output


def test_unknown_option_is_a_usage_error(runner):
    result = runner.invoke(cli, ["verify", "--bogus"])

    assert result.exit_code == EXIT_USAGE


def test_synth_preprocess_train_evaluate(runner, tmp_path):
    demos = tmp_path / "synth"
    assert runner.invoke(cli, ["synth", "--out", str(demos), "--minutes", "0.1", "--trials", "2", "--seed", "1"]).exit_code == EXIT_OK
    assert len(list((demos / "demos" / "train").glob("*.csv"))) == 2

    v_path = tmp_path / "v.json"
    result = runner.invoke(cli, ["preprocess", "--recordings", str(demos / "demos" / "train"), "--out", str(v_path)])
    assert result.exit_code == EXIT_OK, result.output
    assert (tmp_path / "v.f64").is_file()

    d_path = tmp_path / "dictionary.json"
    result = runner.invoke(cli, ["train", "--demos", str(v_path), "--primitives", "2", "--max-iters", "5", "--out", str(d_path)])
    assert result.exit_code == EXIT_OK, result.output
    assert (tmp_path / "dictionary.report.json").is_file()

    result = runner.invoke(cli, ["evaluate", "--dict", str(d_path), "--demos", str(v_path), "--out", str(tmp_path / "table.json")])
    assert result.exit_code == EXIT_OK, result.output
    assert "| Thumb |" in result.output

    result = runner.invoke(cli, ["bench", "--dict", str(d_path), "--demos", str(v_path), "--count", "2"])
    assert result.exit_code == EXIT_OK, result.output
    assert "over 2 calls" in result.output


def test_evaluate_needs_a_mode(runner):
    result = runner.invoke(cli, ["evaluate"])

    assert result.exit_code == EXIT_USAGE


def _write_grasp(tmp_path, make_trajectory, tips, name):
    return str(storage.write_trajectory_csv(make_trajectory(tips), tmp_path / name))


def test_verify_exit_codes(runner, tmp_path, make_trajectory, grasp_tips):
    good = _write_grasp(tmp_path, make_trajectory, np.repeat(grasp_tips[None], 3, axis=0), "good.csv")
    lifted = np.repeat(grasp_tips[None], 3, axis=0)
    lifted[1, 1:] += 0.2
    bad = _write_grasp(tmp_path, make_trajectory, lifted, "bad.csv")

    ok = runner.invoke(cli, ["verify", "--traj", good, "--object", "cube", "--out", str(tmp_path / "good.json"),
                             "--plot-data", str(tmp_path / "good_contacts.csv")])
    failed = runner.invoke(cli, ["verify", "--traj", bad, "--object", "cube", "--out", str(tmp_path / "bad.json")])

    assert ok.exit_code == EXIT_OK, ok.output
    assert failed.exit_code == EXIT_VIOLATIONS, failed.output
    assert (tmp_path / "bad.json").is_file()
    assert (tmp_path / "good_contacts.csv").is_file()


@pytest.fixture
def generation_inputs(tmp_path, make_dictionary, endpoint_frames):
    d = make_dictionary(n_steps=settings.N_STEPS, n_primitives=5)
    initial, final = endpoint_frames(d, np.full(5, 0.5))
    return (
        str(storage.save_matrix(d, tmp_path / "dictionary.json")),
        str(storage.write_frame_csv(initial, tmp_path / "initial.csv")),
        str(storage.write_frame_csv(final, tmp_path / "final.csv")),
    )


def test_generate_succeeds_with_loose_bounds(runner, tmp_path, generation_inputs):
    dict_path, initial, final = generation_inputs
    out = tmp_path / "traj.csv"

    result = runner.invoke(cli, ["generate", "--dict", dict_path, "--initial", initial, "--final", final,
                                 "--vmax", "1e6", "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    assert storage.read_trajectory_csv(out).n_steps == settings.N_STEPS
    assert "wall_time_ms" not in (tmp_path / "traj.stats.json").read_text()


def test_generate_reports_infeasible_bounds(runner, tmp_path, generation_inputs):
    dict_path, initial, final = generation_inputs
    out = tmp_path / "traj.csv"

    result = runner.invoke(cli, ["generate", "--dict", dict_path, "--initial", initial, "--final", final,
                                 "--vmax", "1e-4", "--out", str(out)])

    assert result.exit_code == EXIT_INFEASIBLE
    assert out.is_file()
    assert '"infeasible"' in (tmp_path / "traj.stats.json").read_text()


def test_pipeline_stage_failure_exits_1(runner, tmp_path):
    result = runner.invoke(cli, ["pipeline", "--out-dir", str(tmp_path / "out"), "--demo-dir", str(tmp_path / "missing")])

    assert result.exit_code == EXIT_USAGE
    assert "[synth]" in result.output


def test_unknown_config_key_exits_1(runner, tmp_path):
    config = tmp_path / "pipeline.yaml"
    config.write_text("objects: [cube]\nbogus: 1\n")

    result = runner.invoke(cli, ["pipeline", "--config", str(config)])

    assert result.exit_code == EXIT_USAGE


@pytest.fixture
def span_inputs(tmp_path, make_dictionary):
    """Dictionary and a matrix whose columns it reproduces exactly."""
    d = make_dictionary(n_steps=settings.N_STEPS, n_primitives=3)
    h = np.random.default_rng(1).uniform(0.2, 1.0, size=(3, 4))
    v = DemoMatrix(v=d.w @ h, n_steps=settings.N_STEPS)
    return (
        str(storage.save_matrix(d, tmp_path / "dictionary.json")),
        str(storage.save_matrix(v, tmp_path / "v.json")),
    )


@pytest.mark.parametrize("method", ["generate", "encode"])
def test_evaluate_methods_print_the_table(runner, tmp_path, span_inputs, method):
    dict_path, v_path = span_inputs
    out = tmp_path / "table.json"

    result = runner.invoke(cli, ["evaluate", "--dict", dict_path, "--demos", v_path, "--method", method, "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    assert "| Thumb |" in result.output
    assert out.is_file()


def test_evaluate_and_bench_read_the_config(runner, tmp_path, span_inputs):
    dict_path, v_path = span_inputs
    config = tmp_path / "pipeline.yaml"
    config.write_text("objects: [cylinder]\ngeneration:\n  lambda: 2.0\n  v_max: 100.0\n")

    evaluated = runner.invoke(cli, ["evaluate", "--dict", dict_path, "--demos", v_path, "--config", str(config),
                                    "--out", str(tmp_path / "table.json")])
    benched = runner.invoke(cli, ["bench", "--dict", dict_path, "--demos", v_path, "--count", "2", "--config", str(config)])

    assert evaluated.exit_code == EXIT_OK, evaluated.output
    assert '"cylinder"' in (tmp_path / "table.json").read_text()
    assert benched.exit_code == EXIT_OK, benched.output
    assert "over 2 calls" in benched.output


@pytest.mark.parametrize("command", ["evaluate", "bench"])
def test_dictionary_with_other_step_count_is_rejected(runner, tmp_path, make_dictionary, span_inputs, command):
    _, v_path = span_inputs
    short = str(storage.save_matrix(make_dictionary(n_steps=2), tmp_path / "short.json"))

    result = runner.invoke(cli, [command, "--dict", short, "--demos", v_path])

    assert result.exit_code == EXIT_USAGE
    assert "N=2" in result.output
