"""
Convex QP over activation vectors.

    minimize   ‖a_start·x − p_start‖² + lam·‖a_end·x − p_end‖²
    subject to x ≥ 0,  |velocity·x| ≤ limits  (row-wise)

solved with quadprog's dual active-set method (Goldfarb-Idnani). The Hessian
of a dictionary problem is rank deficient (42 data rows against hundreds of
primitives), so a small ridge relative to its mean diagonal makes it
positive definite; KKT residuals are reported against the unregularized
problem.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import quadprog

from app.core.exceptions import DimensionMismatchError, ProcessingError

RIDGE = 1e-8
ACTIVE_TOL = 1e-9


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    active_velocity_constraints: int
    # Factor applied to x to remove round-off level velocity overshoot (1.0 when none)
    velocity_scale: float


def endpoint_objective(a_start, p_start, a_end, p_end, lam: float, x: np.ndarray) -> float:
    return float(np.sum((a_start @ x - p_start) ** 2) + lam * np.sum((a_end @ x - p_end) ** 2))


def solve_activation_qp(
    a_start: np.ndarray,
    p_start: np.ndarray,
    a_end: np.ndarray,
    p_end: np.ndarray,
    lam: float,
    velocity: Optional[np.ndarray] = None,
    limits: Optional[np.ndarray] = None,
) -> QpSolution:
    n = a_start.shape[1]
    if a_end.shape[1] != n or a_start.shape[0] != p_start.shape[0] or a_end.shape[0] != p_end.shape[0]:
        raise DimensionMismatchError("endpoint blocks and targets disagree in shape")

    hessian = a_start.T @ a_start + lam * (a_end.T @ a_end)
    hessian = 0.5 * (hessian + hessian.T)
    linear = a_start.T @ p_start + lam * (a_end.T @ p_end)
    ridge = RIDGE * max(float(np.trace(hessian)) / n, 1e-12)
    regularized = hessian + ridge * np.eye(n)

    blocks = [np.eye(n)]
    bounds = [np.zeros(n)]
    rows = np.zeros((0, n))
    row_limits = np.zeros(0)
    if velocity is not None:
        if limits is None or velocity.shape != (limits.shape[0], n):
            raise DimensionMismatchError("velocity rows and limits disagree in shape")
        keep = np.any(velocity != 0.0, axis=1)
        rows, row_limits = velocity[keep], limits[keep]
        # quadprog form Cᵀx ≥ b:  −v·h ≥ −limit  and  v·h ≥ −limit
        blocks += [-rows.T, rows.T]
        bounds += [-row_limits, -row_limits]
    constraints = np.ascontiguousarray(np.hstack(blocks))
    rhs = np.concatenate(bounds)

    try:
        x, _, _, iterations, multipliers, _ = quadprog.solve_qp(regularized, linear, constraints, rhs, 0)
    except ValueError as exc:
        raise ProcessingError("QP solver failed", details=str(exc)) from exc

    x = np.maximum(x, 0.0)
    scale = 1.0
    if rows.shape[0]:
        ratio = float(np.max(np.abs(rows @ x) / row_limits))
        if ratio > 1.0:
            scale = 1.0 / ratio
            x = x * scale

    stationarity = hessian @ x - linear - constraints @ multipliers
    complementarity = multipliers * (constraints.T @ x - rhs)
    reference = max(1.0, float(np.max(np.abs(linear))))
    kkt = max(float(np.max(np.abs(stationarity))), float(np.max(np.abs(complementarity)))) / reference

    active = 0
    if rows.shape[0]:
        active = int(np.sum(np.abs(rows @ x) >= row_limits * (1.0 - ACTIVE_TOL)))

    return QpSolution(
        x=x,
        objective=endpoint_objective(a_start, p_start, a_end, p_end, lam, x),
        iterations=int(iterations[0]),
        kkt_residual=kkt,
        active_velocity_constraints=active,
        velocity_scale=scale,
    )
