"""Recovery of bilr matrices from one-bit measurements.

Two schemes are provided:

* projected back projection (``recover_pbp``): apply the adjoint of a dense
  ensemble to the signs and project onto the bilr set;
* multistep recovery (``recover_multistep``) for factorized ensembles:
  rank-truncate the inner back projection, lift it through ``B`` and keep the
  ``s`` strongest rows, then lift through ``C`` and keep the ``s`` strongest
  columns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .matrix_core import BilrMatrix, ShapeError
from .operators import (
    DimensionTooLargeError,
    hard_threshold_cols,
    hard_threshold_rank,
    hard_threshold_rows,
    project_bilr_exhaustive,
    project_bilr_heuristic,
)
from .sensing import DenseEnsemble, FactorizedEnsemble, adjoint, quantize, sense_raw

log = logging.getLogger(__name__)


class ZeroEstimateError(ValueError):
    """The estimate is identically zero and cannot be normalized."""


@dataclass(frozen=True)
class RecoveryOutput:
    estimate: np.ndarray
    estimate_structured: BilrMatrix
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_structured(cls, Z: BilrMatrix, metadata: dict) -> "RecoveryOutput":
        # the dense view is the densified structured view, so both agree exactly
        return cls(Z.dense(), Z, metadata)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.estimate))


def rescale_to_unit(out: RecoveryOutput) -> RecoveryOutput:
    """Divide the estimate by its Frobenius norm."""
    nrm = out.norm
    if nrm == 0.0 or not np.isfinite(nrm):
        raise ZeroEstimateError("cannot normalize a zero estimate")
    Z = out.estimate_structured
    Zu = replace(Z, left_factor=Z.left_factor / nrm)
    return RecoveryOutput.from_structured(Zu, {**out.metadata, "rescaled_from_norm": nrm})


def _check_signs(y, m: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (m,):
        raise ShapeError(f"expected {m} signs, got shape {y.shape}")
    if not np.all(np.abs(y) == 1):
        raise ValueError("sign vector entries must be +1 or -1")
    return y.astype(float)


def hamming_fraction(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"sign vectors differ in shape: {a.shape} vs {b.shape}")
    return float(np.count_nonzero(a != b)) / a.size


def recover_pbp(y, ensemble: DenseEnsemble, s: int, r: int, *, allow_heuristic: bool = False,
                sweeps: int = 5, back_projection=None, check_consistency: bool = True) -> RecoveryOutput:
    """Projected back projection ``P(A^* y)``.

    The projection is exhaustive whenever the size ceiling allows it. Above
    the ceiling the alternating heuristic is used only with
    ``allow_heuristic=True`` and is flagged in ``metadata["projection"]``.

    ``back_projection`` may carry a precomputed ``A^* y``. Consistency of the
    estimate with ``y`` is measured (``metadata["consistency_hamming"]``) but
    never enforced.
    """
    if not isinstance(ensemble, DenseEnsemble):
        raise TypeError("projected back projection needs a dense ensemble")
    y = _check_signs(y, ensemble.m)
    bp = adjoint(ensemble, y) if back_projection is None else np.asarray(back_projection, dtype=float)
    if bp.shape != (ensemble.n, ensemble.n):
        raise ShapeError(f"back projection must be {ensemble.n} x {ensemble.n}, got {bp.shape}")
    try:
        Z, residual = project_bilr_exhaustive(bp, s, r)
        projection = "exhaustive"
    except DimensionTooLargeError:
        if not allow_heuristic:
            raise
        Z = project_bilr_heuristic(bp, s, r, sweeps)
        residual = float(np.linalg.norm(bp - Z.dense()))
        projection = "heuristic"
    meta = {
        "scheme": "pbp",
        "s": s,
        "r": r,
        "projection": projection,
        "normalized_ensemble": ensemble.normalized,
        "back_projection": bp,
        "back_projection_norm": float(np.linalg.norm(bp)),
        "projection_residual": residual,
    }
    out = RecoveryOutput.from_structured(Z, meta)
    if check_consistency:
        meta["consistency_hamming"] = hamming_fraction(quantize(sense_raw(ensemble, out.estimate)), y)
        log.debug("pbp estimate disagrees with %.4f of the signs", meta["consistency_hamming"])
    return out


def recover_multistep(y, ensemble: FactorizedEnsemble, s: int, r: int, *,
                      back_projection=None) -> RecoveryOutput:
    """Multistep recovery for factorized ensembles.

    ``X' = H_col_s( H_row_s( B^T H_rank_r(A'^* y) ) C )``. Every intermediate
    matrix is kept in ``metadata``. ``back_projection`` may carry a
    precomputed ``A'^* y`` (``p x p``).
    """
    if not isinstance(ensemble, FactorizedEnsemble):
        raise TypeError("multistep recovery needs a factorized ensemble")
    y = _check_signs(y, ensemble.m)
    W = adjoint(ensemble, y) if back_projection is None else np.asarray(back_projection, dtype=float)
    if W.shape != (ensemble.p, ensemble.p):
        raise ShapeError(f"back projection must be {ensemble.p} x {ensemble.p}, got {W.shape}")
    W_r = hard_threshold_rank(W, r)
    R = hard_threshold_rows(ensemble.B.T @ W_r, s)
    X_pipe = hard_threshold_cols(R @ ensemble.C, s)
    Z = BilrMatrix.from_dense(X_pipe, s, r)
    meta = {
        "scheme": "multistep",
        "s": s,
        "r": r,
        "back_projection": W,
        "rank_truncated": W_r,
        "row_thresholded": R,
        "pipeline_output": X_pipe,
        "back_projection_norm": float(np.linalg.norm(W)),
        "rank_truncated_norm": float(np.linalg.norm(W_r)),
        "rank_residual": float(np.linalg.norm(W - W_r)),
        "row_thresholded_norm": float(np.linalg.norm(R)),
    }
    return RecoveryOutput.from_structured(Z, meta)
