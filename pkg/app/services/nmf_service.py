"""
Non-negative matrix factorization V ≈ W·H of the demonstration matrix.

Default rule is Lee-Seung multiplicative updates on the Frobenius objective;
`hals` runs hierarchical alternating least squares column updates instead.
Both keep W, H >= 0 and never increase ‖V − WH‖_F.

One iteration updates H several times against the same W^T V and W^T W,
then W the same way; the repeat count is bounded by the cost of forming
those products.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import nnls
from tqdm import tqdm

from app.core.exceptions import (
    DimensionMismatchError,
    NonNegativityViolatedError,
    ProcessingError,
    RankTooLargeError,
)
from app.schemas.dictionary import Dictionary, NmfConfig, NmfResult, Provenance
from app.schemas.evaluation import ErrorTable, TrainingReport
from app.schemas.recording import DemoMatrix
from app.services.evaluation_service import generation_error_table, trajectory_error_table
from app.utils.audit import audit

logger = logging.getLogger(__name__)

# Floor for update-ratio denominators
DENOMINATOR_FLOOR = 1e-12
# Smallest value HALS leaves in a factor, keeps columns from collapsing to zero
HALS_FLOOR = 1e-16
# Relative slack for the descent check (floating-point noise only)
DESCENT_SLACK = 1e-9
# Inner update budget relative to the cost of the per-iteration products
INNER_ALPHA = 1.0
# Inner updates stop once a step moves the factor this much less than the first one
INNER_TOL = 0.01


class NmfService:
    """Factorizes demonstration matrices into primitive dictionaries"""

    def __init__(self, config: Optional[NmfConfig] = None, progress: bool = False):
        self.config = config or NmfConfig()
        self.progress = progress

    def _initial_factors(self, v: np.ndarray, rank: int) -> Tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(self.config.rng_seed)
        scale = self.config.init_scale
        if scale is None:
            # W·H then starts at roughly the mean of V
            scale = 2.0 * np.sqrt(max(float(v.mean()), DENOMINATOR_FLOOR) / rank)
        n, m = v.shape
        # 1 - U[0, 1) lies in (0, 1]: no exact zeros, which would never move again
        w = scale * (1.0 - rng.random((n, rank)))
        h = scale * (1.0 - rng.random((rank, m)))
        return w, h

    @staticmethod
    def _multiplicative_step(wtv, wtw, h):
        h *= wtv / np.maximum(wtw @ h, DENOMINATOR_FLOOR)
        return h

    @staticmethod
    def _hals_step(wtv, wtw, h):
        for r in range(h.shape[0]):
            h[r] = np.maximum(h[r] + (wtv[r] - wtw[r] @ h) / max(wtw[r, r], DENOMINATOR_FLOOR), HALS_FLOOR)
        return h

    @staticmethod
    def inner_limit(n: int, m: int, rank: int) -> int:
        """Repeats of the H update that cost about as much as forming W^T V and W^T W once."""
        return 1 + int(INNER_ALPHA * (1.0 + n / rank + n / m))

    def _update_h(self, v, w, h, step):
        """Repeated updates of H against a fixed W; no repeat increases ‖V − WH‖_F."""
        wtv = w.T @ v
        wtw = w.T @ w
        first = None
        for _ in range(self.inner_limit(v.shape[0], v.shape[1], h.shape[0])):
            before = h.copy()
            h = step(wtv, wtw, h)
            change = float(np.linalg.norm(h - before))
            if first is None:
                first = change
            if change <= INNER_TOL * first:
                break
        return h

    def _iterate(self, v, w, h, step):
        h = self._update_h(v, w, h, step)
        # W update is the H update of V^T ≈ H^T W^T
        w = self._update_h(v.T, h.T, w.T.copy(), step).T.copy()
        return w, h

    def factorize_matrix(self, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[float], bool]:
        """Factorize any non-negative matrix; returns (W, H, objective trace, converged)."""
        v = np.asarray(v, dtype=float)
        if v.ndim != 2:
            raise DimensionMismatchError(f"V must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise NonNegativityViolatedError("Every element of V must be finite and >= 0")
        rank = self.config.n_primitives
        if rank >= v.shape[1]:
            raise RankTooLargeError(f"{rank} primitives need more than {v.shape[1]} columns (l < m)")

        step = self._hals_step if self.config.update_rule == "hals" else self._multiplicative_step
        w, h = self._initial_factors(v, rank)
        v_norm = max(float(np.linalg.norm(v)), DENOMINATOR_FLOOR)
        previous = float(np.linalg.norm(v - w @ h))
        trace = []
        converged = False

        iterations = range(self.config.max_iters)
        if self.progress:
            iterations = tqdm(iterations, desc=f"NMF ({self.config.update_rule})", unit="it")
        for it in iterations:
            w, h = self._iterate(v, w, h, step)
            objective = float(np.linalg.norm(v - w @ h))
            if objective > previous + DESCENT_SLACK * previous + 1e-12 * v_norm:
                raise ProcessingError(
                    "NMF objective increased",
                    details=f"iteration {it}: {previous:.12g} -> {objective:.12g}",
                )
            trace.append(objective)
            if objective <= 1e-14 * v_norm or previous - objective <= self.config.rel_tol * previous:
                converged = True
                break
            previous = objective

        logger.info(
            f"NMF finished after {len(trace)} iterations: residual {trace[-1]:.6g} "
            f"({trace[-1] / v_norm:.3e} relative), converged={converged}"
        )
        return w, h, trace, converged

    def factorize(self, v: DemoMatrix, object_label: str = "unknown") -> NmfResult:
        """nmf_factorize: the dictionary carries V's offsets and training provenance."""
        w, h, trace, converged = self.factorize_matrix(v.v)
        provenance = Provenance(
            object_label=object_label,
            seed=self.config.rng_seed,
            iterations=len(trace),
            final_residual=trace[-1],
            update_rule=self.config.update_rule,
            n_columns=v.m,
        )
        dictionary = Dictionary(
            w=w,
            n_steps=v.n_steps,
            n_primitives=self.config.n_primitives,
            offsets=v.offsets,
            provenance=provenance,
        )
        audit("nmf.trained", object=object_label, primitives=self.config.n_primitives,
              columns=v.m, iterations=len(trace), residual=trace[-1], converged=converged)
        return NmfResult(dictionary=dictionary, activations=h, objective_trace=trace, converged=converged)

    @staticmethod
    def encode_columns(dictionary: Dictionary, v: np.ndarray) -> np.ndarray:
        """Activations of unseen columns against a fixed W (non-negative least squares per column)."""
        v = np.asarray(v, dtype=float)
        if v.ndim != 2 or v.shape[0] != dictionary.w.shape[0]:
            raise DimensionMismatchError(f"columns need {dictionary.w.shape[0]} rows, got shape {v.shape}")
        h = np.zeros((dictionary.n_primitives, v.shape[1]))
        for j in range(v.shape[1]):
            h[:, j], _ = nnls(dictionary.w, v[:, j])
        return h

    @staticmethod
    def reconstruction_report(res: NmfResult, v: DemoMatrix) -> ErrorTable:
        """Per-finger, object translation and orientation errors between V and W·H."""
        if v.v.shape != (res.dictionary.w.shape[0], res.activations.shape[1]):
            raise DimensionMismatchError("V and W·H shapes disagree")
        recreated = res.dictionary.w @ res.activations
        return trajectory_error_table(
            real=v.v,
            recreated=recreated,
            offsets=v.offsets,
            n_steps=v.n_steps,
            title="Reconstruction error",
            object_label=res.dictionary.provenance.object_label,
        )

    @classmethod
    def training_report(
        cls,
        res: NmfResult,
        train: DemoMatrix,
        test: Optional[DemoMatrix] = None,
        lambda_: float = 1.0,
    ) -> TrainingReport:
        """Objective trace plus reconstruction tables for the training and held-out columns.

        Held-out columns get two tables: activations fitted to the full column,
        and activations generated from the column's first and last frames.
        """
        test_table = None
        generation_table = None
        if test is not None and test.m:
            generation_table = generation_error_table(
                res.dictionary, test, lambda_=lambda_, object_label=res.dictionary.provenance.object_label
            )
            h = cls.encode_columns(res.dictionary, test.v)
            test_table = trajectory_error_table(
                real=test.v,
                recreated=res.dictionary.w @ h,
                offsets=test.offsets,
                n_steps=test.n_steps,
                title="Held-out reconstruction error",
                object_label=res.dictionary.provenance.object_label,
            )
        return TrainingReport(
            object_label=res.dictionary.provenance.object_label,
            n_primitives=res.dictionary.n_primitives,
            n_columns=train.m,
            iterations=len(res.objective_trace),
            converged=res.converged,
            objective_trace=res.objective_trace,
            train=cls.reconstruction_report(res, train),
            test=test_table,
            test_generation=generation_table,
        )
