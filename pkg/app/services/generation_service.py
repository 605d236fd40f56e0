"""
Trajectory generation from a primitive dictionary.

Finds activations h ≥ 0 whose first and last frames match the requested
initial and final frames (weighted by λ) while every fingertip coordinate
stays within its speed limit between consecutive steps. Reachability,
collision and contact are left to the verifier.
"""
import logging
import time
from typing import List, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import InfeasibleError, ProcessingError
from app.core.types import N_FINGERS
from app.schemas.dictionary import ActivationVector, Dictionary
from app.schemas.generation import GenerationRequest, GenerationResult, SolveStats, VelocityBounds
from app.schemas.trajectory import Frame, Trajectory
from app.services.qp_solver import QpSolution, solve_activation_qp
from app.services.trajectory_codec import offset_vector, reconstruct, remove_offset
from app.utils.audit import audit

logger = logging.getLogger(__name__)

VELOCITY_TOL = 1e-9


class GenerationService:
    """Generates fingertip + object trajectories against one read-only dictionary"""

    def __init__(self, dictionary: Dictionary):
        self.dictionary = dictionary
        self._start = dictionary.block(1)
        self._end = dictionary.block(dictionary.n_steps)
        self._velocity = dictionary.fingertip_velocity_matrix()

    def _limits(self, bounds: VelocityBounds) -> np.ndarray:
        return np.tile(bounds.limits(), self.dictionary.n_steps - 1)

    def _solve(self, p_start, p_end, lam: float, bounds: Optional[VelocityBounds]) -> QpSolution:
        if bounds is None or not bounds.enabled:
            return solve_activation_qp(self._start, p_start, self._end, p_end, lam)
        return solve_activation_qp(
            self._start, p_start, self._end, p_end, lam,
            velocity=self._velocity, limits=self._limits(bounds),
        )

    def _check_velocities(self, trajectory: Trajectory, bounds: VelocityBounds) -> None:
        if not bounds.enabled:
            return
        speeds = np.abs(np.diff(trajectory.fingertips, axis=0)) / trajectory.dt
        limits = bounds.limits().reshape(N_FINGERS, 3)
        overshoot = float(np.max(speeds - limits[None, :, :]))
        if overshoot > VELOCITY_TOL:
            raise ProcessingError("Generated trajectory exceeds the velocity bounds", details=f"by {overshoot:.3g} m/s")

    def _result(self, solution: QpSolution, p_start, p_end, started: float, status: str = "optimal") -> GenerationResult:
        h = ActivationVector(h=solution.x)
        offset_trajectory = reconstruct(self.dictionary, h)
        stats = SolveStats(
            status=status,
            iterations=solution.iterations,
            objective=solution.objective,
            kkt_residual=solution.kkt_residual,
            kkt_ok=solution.kkt_residual <= settings.KKT_TOL,
            active_velocity_constraints=solution.active_velocity_constraints,
            velocity_scale=solution.velocity_scale,
            wall_time_ms=(time.perf_counter() - started) * 1000.0,
        )
        return GenerationResult(
            h=h,
            trajectory=remove_offset(offset_trajectory, self.dictionary.offsets),
            initial_residual=offset_trajectory.features[0] - p_start,
            final_residual=offset_trajectory.features[-1] - p_end,
            solve_stats=stats,
        )

    def generate(self, req: GenerationRequest) -> GenerationResult:
        started = time.perf_counter()
        offsets = self.dictionary.offsets
        p_start = offset_vector(req.initial, offsets)
        p_end = offset_vector(req.final, offsets)
        bounds = req.velocity_bounds

        solution = self._solve(p_start, p_end, req.lambda_, bounds)
        result = self._result(solution, p_start, p_end, started)
        self._check_velocities(result.trajectory, bounds)
        if not result.solve_stats.kkt_ok:
            logger.warning(
                f"QP solution misses the optimality conditions: kkt residual {solution.kkt_residual:.3g} "
                f"> tolerance {settings.KKT_TOL:g}"
            )
            audit("generation.kkt_exceeded", kkt_residual=solution.kkt_residual, tolerance=settings.KKT_TOL)

        if (
            req.infeasible_residual is not None
            and solution.active_velocity_constraints
            and result.residual_norm > req.infeasible_residual
        ):
            free = self._solve(p_start, p_end, req.lambda_, None)
            free_residual = np.sqrt(np.sum((self._start @ free.x - p_start) ** 2) + np.sum((self._end @ free.x - p_end) ** 2))
            if result.residual_norm - free_residual > req.infeasible_residual:
                result = self._result(solution, p_start, p_end, started, status="infeasible")
                audit("generation.infeasible", residual=result.residual_norm, unbounded_residual=float(free_residual),
                      v_max=bounds.v_max)
                raise InfeasibleError(
                    f"Velocity bounds (v_max={bounds.v_max} m/s) keep the endpoints from being reached",
                    details=f"best feasible residual {result.residual_norm:.4g}, unbounded {free_residual:.4g}",
                    result=result,
                )

        logger.debug(
            f"Generated trajectory: objective {solution.objective:.3e}, kkt {solution.kkt_residual:.1e}, "
            f"{solution.active_velocity_constraints} active velocity rows, {result.solve_stats.wall_time_ms:.1f} ms"
        )
        return result

    def generate_sequence(
        self,
        start: Frame,
        targets: List[Frame],
        lambda_: Optional[float] = None,
        velocity_bounds: Optional[VelocityBounds] = None,
    ) -> Tuple[List[GenerationResult], Trajectory]:
        """Chain generate calls through a list of targets (composite manipulation).

        Each call starts from the frame the previous one actually reached; the
        returned trajectory drops the duplicated boundary frames.
        """
        results = []
        current = start
        for target in targets:
            fields = {"initial": current, "final": target}
            if lambda_ is not None:
                fields["lambda_"] = lambda_
            if velocity_bounds is not None:
                fields["velocity_bounds"] = velocity_bounds
            result = self.generate(GenerationRequest(**fields))
            results.append(result)
            current = result.trajectory.frame(-1)

        pieces = [results[0].trajectory.features] + [r.trajectory.features[1:] for r in results[1:]]
        combined = Trajectory(features=np.concatenate(pieces), dt=self.dictionary.dt)
        return results, combined
