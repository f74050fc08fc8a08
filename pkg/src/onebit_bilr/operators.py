"""Hard-thresholding operators and projections onto the bilr set.

Ties are always broken towards the smallest index: among rows (columns) of
equal norm the earlier one is kept, and among support pairs of equal residual
the lexicographically first ``(S, T)`` wins.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .matrix_core import BilrMatrix, ShapeError, as_matrix, svd

MAX_EXHAUSTIVE_N = 14
MAX_EXHAUSTIVE_S = 4

# Support pairs whose truncated energy is within this relative margin of the
# best one are re-ranked by their directly computed residual.
_TIE_WINDOW = 1e-10


class DimensionTooLargeError(ValueError):
    """Exhaustive projection requested above its size ceiling."""


def hard_threshold_rank(M, r: int) -> np.ndarray:
    """Best rank-``r`` approximation (keeps the ``r`` leading singular triplets)."""
    M = as_matrix(M)
    if r < 0:
        raise ValueError(f"rank must be nonnegative, got {r}")
    if r >= min(M.shape):
        return M.copy()
    if r == 0:
        return np.zeros_like(M)
    return svd(M).reconstruct(r)


def _top_indices(sq_norms: np.ndarray, s: int) -> np.ndarray:
    order = np.argsort(-sq_norms, kind="stable")
    return np.sort(order[:s])


def hard_threshold_rows(M, s: int) -> np.ndarray:
    """Keep the ``s`` rows of largest l2 norm, zero the others."""
    M = as_matrix(M)
    if s < 0:
        raise ValueError(f"row count must be nonnegative, got {s}")
    if s >= M.shape[0]:
        return M.copy()
    out = np.zeros_like(M)
    keep = _top_indices(np.einsum("ij,ij->i", M, M), s)
    out[keep] = M[keep]
    return out


def hard_threshold_cols(M, s: int) -> np.ndarray:
    """Keep the ``s`` columns of largest l2 norm, zero the others."""
    return hard_threshold_rows(as_matrix(M).T, s).T


def _candidate(M: np.ndarray, S, T, r: int) -> tuple[np.ndarray, float]:
    Z = np.zeros_like(M)
    idx = np.ix_(S, T)
    Z[idx] = hard_threshold_rank(M[idx], r)
    return Z, float(np.linalg.norm(M - Z))


def _bilr_on_support(M: np.ndarray, S, T, s: int, r: int) -> BilrMatrix:
    n = M.shape[0]
    L = np.zeros((n, r))
    R = np.zeros((n, r))
    sv = svd(M[np.ix_(S, T)])
    k = min(r, len(sv.singular_values))
    L[np.ix_(S, np.arange(k))] = sv.left_vectors[:, :k] * sv.singular_values[:k]
    R[np.ix_(T, np.arange(k))] = sv.right_vectors[:, :k]
    return BilrMatrix(n, s, r, L, R, tuple(int(i) for i in S), tuple(int(j) for j in T))


def _check_square(M) -> np.ndarray:
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ShapeError(f"expected a square matrix, got {M.shape}")
    return M


def _truncated_energy(blocks: np.ndarray, r: int) -> np.ndarray:
    if r >= blocks.shape[-1]:
        return np.einsum("...ij,...ij->...", blocks, blocks)
    sv = np.linalg.svd(blocks, compute_uv=False)
    return np.sum(sv[..., :r] ** 2, axis=-1)


def project_bilr_exhaustive(M, s: int, r: int, max_n: int = MAX_EXHAUSTIVE_N,
                            max_s: int = MAX_EXHAUSTIVE_S) -> tuple[BilrMatrix, float]:
    """Exact projection onto the bilr set by enumerating every ``(S, T)`` pair.

    For each pair of ``s``-subsets the best rank-``r`` approximation of the
    ``S x T`` block is formed; the pair with the smallest Frobenius residual
    wins. Cost grows like ``C(n, s)^2`` SVDs, hence the size ceiling.

    Returns the projection and its residual ``||M - P(M)||_F``.
    """
    M = _check_square(M)
    n = M.shape[0]
    if not (0 <= r <= s <= n):
        raise ShapeError(f"need 0 <= r <= s <= n, got n={n}, s={s}, r={r}")
    if n > max_n or s > max_s:
        raise DimensionTooLargeError(f"exhaustive projection limited to n <= {max_n}, s <= {max_s}; got n={n}, s={s}")
    combos = np.array(list(combinations(range(n), s)), dtype=np.intp).reshape(-1, s)
    K = len(combos)
    energy = np.empty((K, K))
    chunk = max(1, 200_000 // K)
    for a in range(0, K, chunk):
        rows = combos[a:a + chunk]
        blocks = M[rows[:, None, :, None], combos[None, :, None, :]]
        energy[a:a + chunk] = _truncated_energy(blocks, r)
    flat = energy.ravel()
    total = float(np.vdot(M, M))
    if total == 0.0:
        S, T = combos[0], combos[0]
        return _bilr_on_support(M, S, T, s, r), 0.0
    best = flat.max()
    window = np.flatnonzero(flat >= best - _TIE_WINDOW * total)
    best_res, best_idx = np.inf, -1
    for idx in window:
        S, T = combos[idx // K], combos[idx % K]
        _, res = _candidate(M, S, T, r)
        if res < best_res:
            best_res, best_idx = res, idx
    S, T = combos[best_idx // K], combos[best_idx % K]
    return _bilr_on_support(M, S, T, s, r), best_res


def _support_of(Z: np.ndarray, axis: int, s: int) -> np.ndarray:
    sq = np.einsum("ij,ij->i", Z, Z) if axis == 0 else np.einsum("ij,ij->j", Z, Z)
    return _top_indices(sq, s)


def project_bilr_heuristic(M, s: int, r: int, sweeps: int = 5) -> BilrMatrix:
    """Alternating support search; a fast stand-in for the exhaustive projection.

    Starts from the supports of ``H_col(H_row(H_rank(M)))`` and then
    alternates: with the column support fixed, pick rows from the rank-``r``
    truncation of ``M[:, T]``; with the row support fixed, pick columns from
    the truncation of ``M[S, :]``. Every candidate support pair is refit
    optimally and the best one seen is returned, so the result is never worse
    than the single pass. Carries no optimality guarantee.
    """
    M = _check_square(M)
    n = M.shape[0]
    if not (0 <= r <= s <= n):
        raise ShapeError(f"need 0 <= r <= s <= n, got n={n}, s={s}, r={r}")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    start = hard_threshold_cols(hard_threshold_rows(hard_threshold_rank(M, r), s), s)
    S, T = _support_of(start, 0, s), _support_of(start, 1, s)
    _, best_res = _candidate(M, S, T, r)
    best = (S, T)
    for _ in range(sweeps):
        cols_fixed = hard_threshold_rank(M[:, T], r)
        S = _support_of(cols_fixed, 0, s)
        _, res = _candidate(M, S, T, r)
        if res < best_res:
            best_res, best = res, (S, T)
        rows_fixed = hard_threshold_rank(M[S, :], r)
        T = _support_of(rows_fixed, 1, s)
        _, res = _candidate(M, S, T, r)
        if res < best_res:
            best_res, best = res, (S, T)
    return _bilr_on_support(M, best[0], best[1], s, r)
