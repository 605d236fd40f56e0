import time

import numpy as np
import pytest

from app.core.exceptions import (
    DimensionMismatchError,
    NonNegativityViolatedError,
    RankTooLargeError,
)
from app.core.types import N_FEATURES
from app.schemas.dictionary import Dictionary, NmfConfig, NmfResult
from app.schemas.recording import DemoMatrix
from app.services.nmf_service import NmfService


def _service(rank, rule="hals", iters=500, seed=0, tol=1e-12):
    return NmfService(NmfConfig(n_primitives=rank, max_iters=iters, rel_tol=tol, rng_seed=seed, update_rule=rule))


def _relative(v, w, h):
    return np.linalg.norm(v - w @ h) / np.linalg.norm(v)


def test_rank_one_matrix_is_recovered():
    v = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])

    w, h, trace, converged = _service(1).factorize_matrix(v)

    assert _relative(v, w, h) <= 1e-6
    assert converged
    assert np.all(w >= 0) and np.all(h >= 0)


def test_rank_must_be_below_column_count():
    with pytest.raises(RankTooLargeError):
        _service(1).factorize_matrix(np.ones((5, 1)))


def test_identical_columns_are_reproduced():
    column = np.linspace(0.5, 1.5, 8)
    v = np.column_stack([column, column])

    w, h, _, _ = _service(1).factorize_matrix(v)

    np.testing.assert_allclose(w @ h, v, atol=1e-6)


def test_negative_input_is_rejected():
    v = np.ones((6, 4))
    v[2, 1] = -1e-3

    with pytest.raises(NonNegativityViolatedError):
        _service(2).factorize_matrix(v)


def test_multiplicative_objective_never_increases():
    rng = np.random.default_rng(3)
    v = rng.uniform(0.1, 1.0, (40, 3)) @ rng.uniform(0.1, 1.0, (3, 20)) + rng.uniform(0, 0.05, (40, 20))

    _, _, trace, _ = _service(3, rule="multiplicative", iters=200).factorize_matrix(v)

    diffs = np.diff(trace)
    assert np.all(diffs <= 1e-9 * np.asarray(trace[:-1]))


def test_hals_fits_exact_low_rank_data():
    rng = np.random.default_rng(1)
    v = rng.uniform(0.1, 1.0, (50, 3)) @ rng.uniform(0.1, 1.0, (3, 30))

    w, h, _, _ = _service(3, iters=500, tol=1e-6).factorize_matrix(v)

    assert _relative(v, w, h) <= 1e-3


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_default_rule_fits_exact_rank_three_matrix(seed):
    rng = np.random.default_rng(seed)
    v = rng.random((50, 3)) @ rng.random((3, 30))
    service = NmfService(NmfConfig(n_primitives=3, rng_seed=seed))

    started = time.perf_counter()
    w, h, trace, _ = service.factorize_matrix(v)
    elapsed = time.perf_counter() - started

    assert service.config.update_rule == "multiplicative"
    assert service.config.max_iters == 500
    assert len(trace) <= 500
    assert _relative(v, w, h) <= 1e-4
    assert np.all(np.diff(trace) <= 1e-12 * np.asarray(trace[:-1]))
    assert elapsed < 5.0


def test_inner_update_budget_is_bounded():
    assert NmfService.inner_limit(2, 3, 1) >= 1
    assert NmfService.inner_limit(50, 30, 3) == 20
    assert NmfService.inner_limit(2100, 1800, 200) == 13


def test_more_primitives_fit_better():
    v = np.random.default_rng(2).uniform(0.0, 1.0, (42, 40))

    residuals = [_service(rank, iters=300).factorize_matrix(v)[2][-1] for rank in (2, 4, 8)]

    assert residuals[0] > residuals[1] > residuals[2]


def test_same_seed_same_dictionary():
    v = np.random.default_rng(4).uniform(0.0, 1.0, (30, 12))

    w1, h1, _, _ = _service(3, rule="multiplicative", iters=50, seed=7).factorize_matrix(v)
    w2, h2, _, _ = _service(3, rule="multiplicative", iters=50, seed=7).factorize_matrix(v)
    w3, _, _, _ = _service(3, rule="multiplicative", iters=50, seed=8).factorize_matrix(v)

    np.testing.assert_array_equal(w1, w2)
    np.testing.assert_array_equal(h1, h2)
    assert not np.array_equal(w1, w3)


def test_factorize_records_provenance():
    v = np.random.default_rng(5).uniform(0.5, 1.0, (N_FEATURES * 2, 6))
    demo = DemoMatrix(v=v, n_steps=2)

    result = _service(2, iters=20).factorize(demo, object_label="cube")

    d = result.dictionary
    assert d.w.shape == (N_FEATURES * 2, 2)
    assert result.activations.shape == (2, 6)
    assert d.provenance.object_label == "cube"
    assert d.provenance.n_columns == 6
    assert d.provenance.update_rule == "hals"
    assert d.provenance.iterations == len(result.objective_trace)
    assert d.provenance.final_residual == result.objective_trace[-1]


def _perfect_fit(n_steps=3, rank=2, m=4):
    rng = np.random.default_rng(6)
    w = rng.uniform(0.3, 1.0, (N_FEATURES * n_steps, rank))
    h = rng.uniform(0.3, 1.0, (rank, m))
    dictionary = Dictionary(w=w, n_steps=n_steps, n_primitives=rank)
    result = NmfResult(dictionary=dictionary, activations=h, objective_trace=[0.0], converged=True)
    return result, w @ h


def test_report_of_perfect_fit_is_zero():
    result, v = _perfect_fit()

    table = NmfService.reconstruction_report(result, DemoMatrix(v=v, n_steps=3))

    assert [row.label for row in table.rows] == ["Thumb", "Index", "Middle", "Ring", "Little", "Object", "Roll", "Pitch", "Yaw"]
    for row in table.rows:
        assert row.mean == pytest.approx(0.0, abs=1e-9)


def test_report_measures_thumb_error_in_millimeters():
    result, v = _perfect_fit()
    shifted = v.copy()
    shifted[0::N_FEATURES] += 0.001

    table = NmfService.reconstruction_report(result, DemoMatrix(v=shifted, n_steps=3))

    assert table.row("Thumb").mean == pytest.approx(1.0, rel=1e-6)
    assert table.row("Thumb").unit == "mm"
    assert table.row("Thumb").count == 3 * 4
    assert table.row("Index").mean == pytest.approx(0.0, abs=1e-9)


def test_report_rejects_mismatched_shapes():
    result, v = _perfect_fit()

    with pytest.raises(DimensionMismatchError):
        NmfService.reconstruction_report(result, DemoMatrix(v=v[:, :2], n_steps=3))


def test_encode_columns_recovers_activations():
    result, _ = _perfect_fit()
    h_true = np.array([[0.2, 0.0], [0.7, 1.3]])

    h = NmfService.encode_columns(result.dictionary, result.dictionary.w @ h_true)

    np.testing.assert_allclose(h, h_true, atol=1e-9)


def test_encode_columns_checks_row_count():
    result, _ = _perfect_fit()

    with pytest.raises(DimensionMismatchError):
        NmfService.encode_columns(result.dictionary, np.ones((5, 2)))


def test_training_report_includes_held_out_columns():
    result, v = _perfect_fit()
    held_out = result.dictionary.w @ np.array([[0.5], [0.25]])

    report = NmfService.training_report(result, DemoMatrix(v=v, n_steps=3), DemoMatrix(v=held_out, n_steps=3))

    assert report.n_columns == 4
    assert report.n_primitives == 2
    assert report.test is not None
    assert report.test.row("Object").mean == pytest.approx(0.0, abs=1e-6)
    assert report.test_generation is not None
    assert report.test_generation.title == "Held-out generation error"
    assert report.test_generation.row("Thumb").mean == pytest.approx(0.0, abs=0.05)
    assert report.train.title == "Reconstruction error"
