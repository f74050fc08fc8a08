"""Matrix types and primitives shared by the rest of the package.

Dense matrices are plain 2-D ``numpy`` float arrays. Bisparse low-rank
("bilr") signals are carried by :class:`BilrMatrix`, which stores the
factored form ``left_factor @ right_factor.T`` together with its row and
column supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._random import make_rng

# Singular values below this fraction of the largest one count as zero.
RANK_RTOL = 1e-10


class ShapeError(ValueError):
    """Invalid dimensions or mismatched shapes."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to converge or produced non-finite output."""


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Validate ``M`` as a finite 2-D float array and return it."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ShapeError(f"{name} has non-finite entries")
    return A


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BilrMatrix:
    """An ``n x n`` matrix of rank at most ``r`` supported on ``S x T``.

    ``left_factor`` and ``right_factor`` are ``n x r`` with rows outside
    ``row_support`` (resp. ``col_support``) exactly zero; the represented
    matrix is ``left_factor @ right_factor.T``.
    """

    n: int
    s: int
    r: int
    left_factor: np.ndarray
    right_factor: np.ndarray
    row_support: tuple[int, ...]
    col_support: tuple[int, ...]

    def __post_init__(self):
        n, s, r = self.n, self.s, self.r
        if not (n >= 1 and 0 <= r and 0 <= s <= n):
            raise ShapeError(f"invalid (n, s, r) = ({n}, {s}, {r})")
        L, R = _readonly(self.left_factor), _readonly(self.right_factor)
        if L.shape != (n, r) or R.shape != (n, r):
            raise ShapeError(f"factors must be {n}x{r}, got {L.shape} and {R.shape}")
        S, T = tuple(int(i) for i in self.row_support), tuple(int(j) for j in self.col_support)
        for name, sup in (("row", S), ("col", T)):
            if len(sup) > s or len(set(sup)) != len(sup) or any(not 0 <= i < n for i in sup):
                raise ShapeError(f"invalid {name} support {sup} for n={n}, s={s}")
        if np.any(np.delete(L, list(S), axis=0)) or np.any(np.delete(R, list(T), axis=0)):
            raise ShapeError("factor rows outside the support must be zero")
        object.__setattr__(self, "left_factor", L)
        object.__setattr__(self, "right_factor", R)
        object.__setattr__(self, "row_support", S)
        object.__setattr__(self, "col_support", T)

    def dense(self) -> np.ndarray:
        return self.left_factor @ self.right_factor.T

    @classmethod
    def from_dense(cls, M, s: int, r: int) -> "BilrMatrix":
        """Factor a dense matrix with at most ``s`` nonzero rows and columns.

        The factorization keeps the ``r`` leading singular triplets of the
        nonzero block, so the result equals ``M`` whenever ``rank(M) <= r``.
        Supports with fewer than ``s`` nonzero lines are padded with the
        smallest unused indices.
        """
        M = as_matrix(M)
        n = M.shape[0]
        if M.shape != (n, n):
            raise ShapeError(f"expected a square matrix, got {M.shape}")
        rows = np.flatnonzero(np.any(M != 0, axis=1))
        cols = np.flatnonzero(np.any(M != 0, axis=0))
        if len(rows) > s or len(cols) > s:
            raise ShapeError(f"matrix has {len(rows)} nonzero rows and {len(cols)} nonzero columns, s={s}")
        L = np.zeros((n, r))
        R = np.zeros((n, r))
        if len(rows) and len(cols):
            sv = svd(M[np.ix_(rows, cols)])
            k = min(r, len(sv.singular_values))
            L[np.ix_(rows, np.arange(k))] = sv.left_vectors[:, :k] * sv.singular_values[:k]
            R[np.ix_(cols, np.arange(k))] = sv.right_vectors[:, :k]
        return cls(n, s, r, L, R, pad_support(rows, s, n), pad_support(cols, s, n))


def pad_support(idx, s: int, n: int) -> tuple[int, ...]:
    """Sorted support of size ``min(s, n)`` containing ``idx``, padded with the smallest unused indices."""
    chosen = set(int(i) for i in idx)
    for i in range(n):
        if len(chosen) >= s:
            break
        chosen.add(i)
    return tuple(sorted(chosen))


def generate_bilr(n: int, s: int, r: int, seed: int) -> BilrMatrix:
    """Random unit-norm member of the bisparse low-rank set.

    Supports are drawn uniformly without replacement, the factors are iid
    standard normal on ``S x [r]`` and ``T x [r]``, and the product is
    rescaled to unit Frobenius norm.
    """
    if not (1 <= r <= s <= n):
        raise ShapeError(f"need 1 <= r <= s <= n, got n={n}, s={s}, r={r}")
    rng = make_rng(seed, "bilr")
    S = np.sort(rng.choice(n, size=s, replace=False))
    T = np.sort(rng.choice(n, size=s, replace=False))
    L = np.zeros((n, r))
    R = np.zeros((n, r))
    L[S] = rng.standard_normal((s, r))
    R[T] = rng.standard_normal((s, r))
    L /= np.linalg.norm(L @ R.T)
    return BilrMatrix(n, s, r, L, R, tuple(S.tolist()), tuple(T.tolist()))


def frobenius_norm(M) -> float:
    return float(np.linalg.norm(np.asarray(M, dtype=float)))


def frobenius_inner(M, M2) -> float:
    A, B = np.asarray(M, dtype=float), np.asarray(M2, dtype=float)
    if A.shape != B.shape:
        raise ShapeError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.vdot(A, B))


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD: ``M = left_vectors @ diag(singular_values) @ right_vectors.T``."""

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def reconstruct(self, k: int | None = None) -> np.ndarray:
        k = len(self.singular_values) if k is None else min(k, len(self.singular_values))
        return (self.left_vectors[:, :k] * self.singular_values[:k]) @ self.right_vectors[:, :k].T


def svd(M) -> SvdResult:
    A = as_matrix(M)
    try:
        U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    if not np.all(np.isfinite(sv)):
        raise NumericalError("SVD produced non-finite singular values")
    return SvdResult(sv, U, Vt.T)


def numerical_rank(M, rtol: float = RANK_RTOL) -> int:
    sv = svd(M).singular_values
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.count_nonzero(sv > rtol * sv[0]))


def in_bilr_set(M, s: int, r: int, rtol: float = RANK_RTOL) -> bool:
    """True when ``M`` has at most ``s`` nonzero rows and columns and numerical rank at most ``r``."""
    M = as_matrix(M)
    rows = np.count_nonzero(np.any(M != 0, axis=1))
    cols = np.count_nonzero(np.any(M != 0, axis=0))
    return rows <= s and cols <= s and numerical_rank(M, rtol) <= r
