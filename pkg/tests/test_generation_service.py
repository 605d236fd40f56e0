import itertools
import logging

import numpy as np
import pytest
from scipy.optimize import minimize

from app.core.config import settings
from app.core.exceptions import DimensionMismatchError, InfeasibleError
from app.schemas.generation import GenerationRequest, VelocityBounds
from app.schemas.trajectory import Frame
from app.services.generation_service import GenerationService
from app.services.qp_solver import endpoint_objective, solve_activation_qp

UNBOUNDED = VelocityBounds(enabled=False)


def _request(initial, final, **fields):
    return GenerationRequest(initial=initial, final=final, **fields)


def test_reachable_endpoints_are_matched_exactly(make_dictionary, endpoint_frames):
    d = make_dictionary()
    h_true = np.array([0.5, 0.2, 0.8])
    initial, final = endpoint_frames(d, h_true)

    result = GenerationService(d).generate(_request(initial, final, velocity_bounds=UNBOUNDED))

    np.testing.assert_allclose(result.h.h, h_true, atol=1e-5)
    assert result.residual_norm <= 1e-6
    assert result.trajectory.n_steps == d.n_steps
    np.testing.assert_allclose(result.trajectory.features[0], initial.to_vector(), atol=1e-6)
    assert result.solve_stats.status == "optimal"


def test_random_activations_are_recovered(make_dictionary, endpoint_frames):
    d = make_dictionary()
    service = GenerationService(d)
    rng = np.random.default_rng(11)

    worst = 0.0
    for _ in range(1000):
        initial, final = endpoint_frames(d, rng.uniform(0.0, 1.0, 3))
        result = service.generate(_request(initial, final, velocity_bounds=UNBOUNDED))
        worst = max(worst, result.residual_norm)

    assert worst <= 1e-6


def _bounded_instance(d, h_true, ratio=0.7):
    """Endpoints from h_true with v_max set to a fraction of its fastest fingertip axis."""
    velocity = d.fingertip_velocity_matrix()
    v_max = ratio * float(np.max(np.abs(velocity @ h_true)))
    return VelocityBounds(v_max=v_max), velocity


def test_bounded_solution_beats_reference_solvers(make_dictionary, endpoint_frames):
    d = make_dictionary()
    service = GenerationService(d)
    a1, an = d.block(1), d.block(d.n_steps)
    rng = np.random.default_rng(5)
    grid = np.array(list(itertools.product(np.arange(0.0, 1.55, 0.05), repeat=3)))

    for _ in range(25):
        h_true = rng.uniform(0.2, 1.0, 3)
        bounds, velocity = _bounded_instance(d, h_true)
        limits = np.full(velocity.shape[0], bounds.v_max)
        p1, pn = a1 @ h_true, an @ h_true
        initial, final = endpoint_frames(d, h_true)

        result = service.generate(_request(initial, final, velocity_bounds=bounds, infeasible_residual=None))
        objective = endpoint_objective(a1, p1, an, pn, 1.0, result.h.h)

        feasible = grid[np.all(np.abs(grid @ velocity.T) <= limits, axis=1)]
        grid_best = min(endpoint_objective(a1, p1, an, pn, 1.0, h) for h in feasible)
        assert objective <= grid_best + 1e-6

        reference = minimize(
            lambda h: endpoint_objective(a1, p1, an, pn, 1.0, h),
            x0=np.zeros(3),
            method="SLSQP",
            bounds=[(0.0, None)] * 3,
            constraints=[
                {"type": "ineq", "fun": lambda h: limits - velocity @ h},
                {"type": "ineq", "fun": lambda h: limits + velocity @ h},
            ],
            options={"ftol": 1e-14, "maxiter": 500},
        )
        assert objective <= reference.fun + 1e-6
        np.testing.assert_allclose(result.h.h, reference.x, atol=1e-3)


def test_velocity_bounds_hold_on_every_step(make_dictionary, endpoint_frames):
    d = make_dictionary()
    service = GenerationService(d)
    rng = np.random.default_rng(8)

    for _ in range(20):
        h_true = rng.uniform(0.2, 1.0, 3)
        bounds, _ = _bounded_instance(d, h_true, ratio=rng.uniform(0.3, 0.9))
        initial, final = endpoint_frames(d, h_true)
        result = service.generate(_request(initial, final, velocity_bounds=bounds, infeasible_residual=None))

        speeds = np.abs(np.diff(result.trajectory.fingertips, axis=0)) / result.trajectory.dt
        assert np.max(speeds) <= bounds.v_max + 1e-9
        assert result.solve_stats.active_velocity_constraints >= 1
        assert result.solve_stats.kkt_residual <= 1e-6


def test_per_finger_override_tightens_one_finger(make_dictionary, endpoint_frames):
    d = make_dictionary()
    h_true = np.array([0.6, 0.6, 0.6])
    initial, final = endpoint_frames(d, h_true)
    bounds = VelocityBounds(v_max=1e3, per_finger={"thumb": 1.0})

    result = GenerationService(d).generate(_request(initial, final, velocity_bounds=bounds, infeasible_residual=None))

    thumb = np.abs(np.diff(result.trajectory.fingertips[:, 0], axis=0)) / result.trajectory.dt
    assert np.max(thumb) <= 1.0 + 1e-9


def test_tight_bounds_raise_infeasible_with_result(make_dictionary, endpoint_frames):
    d = make_dictionary()
    initial, final = endpoint_frames(d, np.array([0.5, 0.5, 0.5]))

    with pytest.raises(InfeasibleError) as exc:
        GenerationService(d).generate(_request(initial, final, velocity_bounds=VelocityBounds(v_max=1e-4)))

    result = exc.value.result
    assert result is not None
    assert result.solve_stats.status == "infeasible"
    assert result.residual_norm > 0.01


def test_disabled_infeasibility_check_returns_best_effort(make_dictionary, endpoint_frames):
    d = make_dictionary()
    initial, final = endpoint_frames(d, np.array([0.5, 0.5, 0.5]))

    result = GenerationService(d).generate(
        _request(initial, final, velocity_bounds=VelocityBounds(v_max=1e-4), infeasible_residual=None)
    )

    assert result.solve_stats.status == "optimal"
    assert result.residual_norm > 0.01


def _unreachable_frames(rng):
    initial = Frame.from_vector(rng.uniform(-0.2, 0.2, 21))
    final = Frame.from_vector(rng.uniform(-0.2, 0.2, 21))
    return initial, final


def test_lambda_trades_initial_against_final_residual(make_dictionary):
    d = make_dictionary(n_primitives=2)
    service = GenerationService(d)
    initial, final = _unreachable_frames(np.random.default_rng(2))

    residuals = []
    for lam in (0.01, 1.0, 100.0):
        result = service.generate(_request(initial, final, lambda_=lam, velocity_bounds=UNBOUNDED))
        residuals.append((np.linalg.norm(result.initial_residual), np.linalg.norm(result.final_residual)))

    initial_norms, final_norms = zip(*residuals)
    assert final_norms[2] <= final_norms[1] + 1e-9 <= final_norms[0] + 2e-9
    assert initial_norms[0] <= initial_norms[1] + 1e-9 <= initial_norms[2] + 2e-9
    assert final_norms[2] < final_norms[0]


def test_sequence_chains_from_reached_frames(make_dictionary, endpoint_frames):
    d = make_dictionary()
    service = GenerationService(d)
    start, first = endpoint_frames(d, np.array([0.4, 0.3, 0.2]))
    _, second = endpoint_frames(d, np.array([0.6, 0.2, 0.5]))

    results, combined = service.generate_sequence(start, [first, second], velocity_bounds=UNBOUNDED)

    assert len(results) == 2
    assert combined.n_steps == 2 * d.n_steps - 1
    np.testing.assert_allclose(combined.features[d.n_steps - 1], results[0].trajectory.features[-1])


def test_qp_identity_problem():
    eye = np.eye(2)

    solution = solve_activation_qp(eye, np.array([1.0, 2.0]), eye, np.array([1.0, 2.0]), 1.0)

    np.testing.assert_allclose(solution.x, [1.0, 2.0], atol=1e-6)
    assert solution.objective == pytest.approx(0.0, abs=1e-10)
    assert solution.velocity_scale == 1.0


def test_qp_clamps_negative_targets_to_zero():
    eye = np.eye(2)

    solution = solve_activation_qp(eye, np.array([-1.0, 2.0]), eye, np.array([-1.0, 2.0]), 1.0)

    np.testing.assert_allclose(solution.x, [0.0, 2.0], atol=1e-6)


def test_qp_single_primitive_least_squares():
    column = np.ones((2, 1))

    solution = solve_activation_qp(column, np.array([2.0, 4.0]), column, np.array([2.0, 4.0]), 1.0)

    np.testing.assert_allclose(solution.x, [3.0], atol=1e-6)


def test_qp_velocity_row_limits_solution():
    eye = np.eye(2)
    velocity = np.array([[1.0, 0.0], [0.0, 0.0]])

    solution = solve_activation_qp(eye, np.array([3.0, 1.0]), eye, np.array([3.0, 1.0]), 1.0,
                                   velocity=velocity, limits=np.array([1.0, 1.0]))

    np.testing.assert_allclose(solution.x, [1.0, 1.0], atol=1e-6)
    assert solution.active_velocity_constraints == 1


def test_qp_rejects_mismatched_blocks():
    with pytest.raises(DimensionMismatchError):
        solve_activation_qp(np.eye(2), np.ones(2), np.eye(3), np.ones(3), 1.0)
    with pytest.raises(DimensionMismatchError):
        solve_activation_qp(np.eye(2), np.ones(2), np.eye(2), np.ones(2), 1.0,
                            velocity=np.ones((3, 2)), limits=np.ones(2))


def test_solution_within_kkt_tolerance_is_flagged_ok(make_dictionary, endpoint_frames, caplog):
    d = make_dictionary()
    initial, final = endpoint_frames(d, np.array([0.5, 0.2, 0.8]))

    with caplog.at_level(logging.WARNING):
        result = GenerationService(d).generate(_request(initial, final, velocity_bounds=UNBOUNDED))

    assert result.solve_stats.kkt_residual <= settings.KKT_TOL
    assert result.solve_stats.kkt_ok
    assert "optimality conditions" not in caplog.text


def test_kkt_residual_above_tolerance_is_reported(make_dictionary, endpoint_frames, caplog, monkeypatch):
    d = make_dictionary()
    initial, final = endpoint_frames(d, np.array([0.5, 0.2, 0.8]))
    monkeypatch.setattr(settings, "KKT_TOL", -1.0)

    with caplog.at_level(logging.WARNING):
        result = GenerationService(d).generate(_request(initial, final, velocity_bounds=UNBOUNDED))

    assert not result.solve_stats.kkt_ok
    assert result.solve_stats.status == "optimal"
    assert "optimality conditions" in caplog.text
