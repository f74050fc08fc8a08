"""One-bit sensing and recovery of bisparse low-rank matrices."""

from .matrix_core import (
    BilrMatrix,
    NumericalError,
    ShapeError,
    SvdResult,
    frobenius_inner,
    frobenius_norm,
    generate_bilr,
    svd,
)
from .operators import (
    DimensionTooLargeError,
    hard_threshold_cols,
    hard_threshold_rank,
    hard_threshold_rows,
    project_bilr_exhaustive,
    project_bilr_heuristic,
)
from .recovery import RecoveryOutput, ZeroEstimateError, recover_multistep, recover_pbp, rescale_to_unit
from .sensing import (
    DenseEnsemble,
    FactorizedEnsemble,
    adjoint,
    make_dense_ensemble,
    make_factorized_ensemble,
    quantize,
    sense_raw,
)

__version__ = "0.1.0"
