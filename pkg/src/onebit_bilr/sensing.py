"""Gaussian sensing ensembles, one-bit quantization and adjoints.

A dense ensemble holds ``m`` matrices ``A_i`` (``n x n``) and applies
``X -> scale * (<A_i, X>_F)_i``. A factorized ensemble holds ``m`` inner
matrices ``A'_i`` (``p x p``) plus side matrices ``B, C`` (``p x n``) and
applies the same map to ``B X C^T``, which is the map of the lifted matrices
``B^T A'_i C`` without ever forming them.

Raw Gaussian entries are drawn in blocks of :data:`BLOCK` matrices, each from
its own seed-derived stream. Small ensembles are kept in memory; large ones
are regenerated block by block on every pass, so memory stays bounded by one
block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ._random import BLOCK, gaussian_block, make_rng
from .matrix_core import ShapeError, as_matrix

# Ensembles with at most this many raw entries are held in memory.
MATERIALIZE_LIMIT = 1 << 24

L1_SCALE = np.sqrt(np.pi / 2)


def _iter_blocks(seed, tag, m, shape, cache) -> Iterator[tuple[int, np.ndarray]]:
    if cache is not None:
        for start in range(0, m, BLOCK):
            yield start, cache[start:start + BLOCK]
        return
    for b, start in enumerate(range(0, m, BLOCK)):
        yield start, gaussian_block(seed, tag, b, min(BLOCK, m - start), shape)


def _generate_all(seed, tag, m, shape) -> np.ndarray:
    out = np.concatenate([blk for _, blk in _iter_blocks(seed, tag, m, shape, None)])
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class DenseEnsemble:
    """``m`` raw ``n x n`` matrices and the scale applied to every measurement."""

    n: int
    m: int
    scale: float
    seed: int | None = None
    normalized: bool = False
    _raw: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_matrices(cls, matrices, scale: float = 1.0) -> "DenseEnsemble":
        A = np.array(matrices, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2] or A.shape[0] < 1:
            raise ShapeError(f"expected an (m, n, n) stack, got {A.shape}")
        A.setflags(write=False)
        return cls(A.shape[1], A.shape[0], float(scale), None, False, A)

    def blocks(self) -> Iterator[tuple[int, np.ndarray]]:
        return _iter_blocks(self.seed, "dense", self.m, (self.n, self.n), self._raw)

    @property
    def matrices(self) -> np.ndarray:
        """Raw matrices as an ``(m, n, n)`` array (generated if not held)."""
        if self._raw is not None:
            return self._raw
        return _generate_all(self.seed, "dense", self.m, (self.n, self.n))

    def to_spec(self) -> dict:
        if self.seed is None:
            raise ValueError("ensemble built from explicit matrices has no seed spec")
        return {"kind": "dense", "n": self.n, "m": self.m, "seed": self.seed, "normalized": self.normalized}


@dataclass(frozen=True, eq=False)
class FactorizedEnsemble:
    """Inner ensemble ``A'_i`` (``p x p``) with side matrices ``B, C`` (``p x n``).

    ``B`` and ``C`` are stored already scaled; ``inner_scale`` multiplies every
    inner measurement.
    """

    n: int
    m: int
    p: int
    seed: int | None
    inner_scale: float
    side_scale: float
    B: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    _raw: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_matrices(cls, inner, B, C, inner_scale: float = 1.0) -> "FactorizedEnsemble":
        A = np.array(inner, dtype=float)
        B, C = as_matrix(B, "B").copy(), as_matrix(C, "C").copy()
        if A.ndim != 3 or A.shape[1] != A.shape[2] or A.shape[0] < 1:
            raise ShapeError(f"expected an (m, p, p) stack, got {A.shape}")
        p = A.shape[1]
        if B.shape[0] != p or C.shape != B.shape:
            raise ShapeError(f"B, C must both be {p} x n, got {B.shape} and {C.shape}")
        for a in (A, B, C):
            a.setflags(write=False)
        return cls(B.shape[1], A.shape[0], p, None, float(inner_scale), 1.0, B, C, A)

    def blocks(self) -> Iterator[tuple[int, np.ndarray]]:
        return _iter_blocks(self.seed, "inner", self.m, (self.p, self.p), self._raw)

    @property
    def inner_matrices(self) -> np.ndarray:
        if self._raw is not None:
            return self._raw
        return _generate_all(self.seed, "inner", self.m, (self.p, self.p))

    def compress(self, X) -> np.ndarray:
        """``B X C^T`` for one matrix or a stack of matrices."""
        return self.B @ np.asarray(X, dtype=float) @ self.C.T

    def to_spec(self) -> dict:
        if self.seed is None:
            raise ValueError("ensemble built from explicit matrices has no seed spec")
        return {"kind": "factorized", "n": self.n, "m": self.m, "p": self.p, "seed": self.seed}


Ensemble = DenseEnsemble | FactorizedEnsemble


def make_dense_ensemble(n: int, m: int, seed: int, normalized: bool = True) -> DenseEnsemble:
    """Gaussian ensemble with iid N(0, 1) entries.

    With ``normalized`` the measurements are multiplied by ``sqrt(pi/2)/m`` so
    that ``E ||A(Z)||_1 = ||Z||_F`` for every fixed ``Z``.
    """
    if n < 1 or m < 1:
        raise ShapeError(f"need n, m >= 1, got n={n}, m={m}")
    scale = L1_SCALE / m if normalized else 1.0
    raw = _generate_all(seed, "dense", m, (n, n)) if m * n * n <= MATERIALIZE_LIMIT else None
    return DenseEnsemble(n, m, float(scale), int(seed), bool(normalized), raw)


def make_factorized_ensemble(n: int, m: int, p: int, seed: int) -> FactorizedEnsemble:
    """Factorized Gaussian ensemble.

    Inner entries are N(0, 1) with measurements scaled by ``sqrt(pi/2)/m``;
    ``B`` and ``C`` have iid N(0, 1/p) entries, so ``E ||Bz||^2 = ||z||^2``.
    """
    if n < 1 or m < 1 or p < 1:
        raise ShapeError(f"need n, m, p >= 1, got n={n}, m={m}, p={p}")
    side = 1.0 / np.sqrt(p)
    B = make_rng(seed, "side-B").standard_normal((p, n)) * side
    C = make_rng(seed, "side-C").standard_normal((p, n)) * side
    B.setflags(write=False)
    C.setflags(write=False)
    raw = _generate_all(seed, "inner", m, (p, p)) if m * p * p <= MATERIALIZE_LIMIT else None
    return FactorizedEnsemble(n, m, p, int(seed), float(L1_SCALE / m), float(side), B, C, raw)


def _measure(flat: np.ndarray, blk: np.ndarray) -> np.ndarray:
    # flat: (k, d*d), blk: (b, d, d) -> (k, b), unscaled
    return flat @ blk.reshape(len(blk), -1).T


def _apply_stack(blocks, m: int, Ws: np.ndarray, scale: float) -> np.ndarray:
    # Ws: (k, d, d) -> (k, m)
    flat = Ws.reshape(Ws.shape[0], -1)
    out = np.empty((Ws.shape[0], m))
    for start, blk in blocks:
        out[:, start:start + len(blk)] = _measure(flat, blk)
    return out * scale


def _check_square(X, d: int, what: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-2:] != (d, d):
        raise ShapeError(f"{what} must be {d} x {d}, got {X.shape}")
    return X


def sense_raw(ensemble: Ensemble, X) -> np.ndarray:
    """Linear measurements ``A(X)`` (length ``m``)."""
    X = _check_square(X, ensemble.n, "signal")
    if X.ndim != 2:
        raise ShapeError(f"signal must be 2-D, got {X.shape}")
    return sense_raw_batch(ensemble, X[None])[0]


def sense_raw_batch(ensemble: Ensemble, Xs) -> np.ndarray:
    """Measurements of a stack ``(k, n, n)`` of signals, shape ``(k, m)``."""
    Xs = _check_square(Xs, ensemble.n, "signals")
    if isinstance(ensemble, FactorizedEnsemble):
        return _apply_stack(ensemble.blocks(), ensemble.m, ensemble.compress(Xs), ensemble.inner_scale)
    return _apply_stack(ensemble.blocks(), ensemble.m, Xs, ensemble.scale)


def sense_inner(ensemble: FactorizedEnsemble, W) -> np.ndarray:
    """Measurements ``A'(W)`` of a ``p x p`` matrix through the inner map."""
    W = _check_square(W, ensemble.p, "inner argument")
    return _apply_stack(ensemble.blocks(), ensemble.m, W.reshape(1, ensemble.p, ensemble.p),
                        ensemble.inner_scale)[0]


def quantize(raw) -> np.ndarray:
    """Entrywise sign with ``sgn(0) = +1``; returns an ``int8`` array of +-1."""
    raw = np.asarray(raw, dtype=float)
    return np.where(raw >= 0, 1, -1).astype(np.int8)


def _check_len(ensemble: Ensemble, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (ensemble.m,):
        raise ShapeError(f"expected a vector of length {ensemble.m}, got shape {v.shape}")
    return v


def adjoint(ensemble: Ensemble, v) -> np.ndarray:
    """``sum_i v_i A_i`` for dense ensembles, ``sum_i v_i A'_i`` (``p x p``) for factorized ones."""
    v = _check_len(ensemble, v)
    d = ensemble.p if isinstance(ensemble, FactorizedEnsemble) else ensemble.n
    scale = ensemble.inner_scale if isinstance(ensemble, FactorizedEnsemble) else ensemble.scale
    acc = np.zeros(d * d)
    for start, blk in ensemble.blocks():
        acc += v[start:start + len(blk)] @ blk.reshape(len(blk), -1)
    return (acc * scale).reshape(d, d)


def adjoint_lifted(ensemble: FactorizedEnsemble, v) -> np.ndarray:
    """Adjoint of the full factorized map: ``B^T (sum_i v_i A'_i) C`` (``n x n``)."""
    return ensemble.B.T @ adjoint(ensemble, v) @ ensemble.C


def materialize(ensemble: Ensemble) -> DenseEnsemble:
    """Dense ensemble with the same measurements (debugging aid).

    For a factorized ensemble this forms every ``B^T A'_i C`` explicitly.
    """
    if isinstance(ensemble, DenseEnsemble):
        return DenseEnsemble.from_matrices(ensemble.matrices, ensemble.scale)
    lifted = np.concatenate([_lift(ensemble, blk) for _, blk in ensemble.blocks()])
    return DenseEnsemble.from_matrices(lifted, ensemble.inner_scale)


def _lift(ensemble: FactorizedEnsemble, blk: np.ndarray) -> np.ndarray:
    return ensemble.B.T @ blk @ ensemble.C


@dataclass(frozen=True)
class OnePass:
    """Everything one sweep over an ensemble yields for a fixed signal."""

    raw: np.ndarray
    signs: np.ndarray
    back_projection: np.ndarray
    lifted: DenseEnsemble | None = None


def sense_and_back_project(ensemble: Ensemble, X, lift: bool = False) -> OnePass:
    """Sense ``X``, quantize and apply the adjoint to the signs in a single pass.

    The result equals ``quantize(sense_raw(...))`` followed by
    ``adjoint(ensemble, signs)``, but a streamed ensemble is only generated
    once. With ``lift`` a factorized ensemble also returns its materialized
    dense counterpart, which later measurements of ``n x n`` matrices can use
    without regenerating the inner matrices.
    """
    X = _check_square(X, ensemble.n, "signal")
    factorized = isinstance(ensemble, FactorizedEnsemble)
    if factorized:
        target, d, scale = ensemble.compress(X[None]), ensemble.p, ensemble.inner_scale
    else:
        target, d, scale = X[None], ensemble.n, ensemble.scale
    flat = target.reshape(1, -1)
    raw = np.empty(ensemble.m)
    acc = np.zeros(d * d)
    lifted = []
    for start, blk in ensemble.blocks():
        vals = _measure(flat, blk)[0]
        raw[start:start + len(blk)] = vals
        acc += quantize(vals).astype(float) @ blk.reshape(len(blk), -1)
        if lift and factorized:
            lifted.append(_lift(ensemble, blk))
    raw *= scale
    signs = quantize(raw)
    lifted_ens = None
    if lift:
        lifted_ens = (DenseEnsemble.from_matrices(np.concatenate(lifted), scale) if factorized
                      else ensemble)
    return OnePass(raw, signs, (acc * scale).reshape(d, d), lifted_ens)


def ensemble_from_spec(spec: dict) -> Ensemble:
    """Rebuild an ensemble from the ``to_spec`` dictionary (seed and shape only)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "dense":
        allowed = {"n", "m", "seed", "normalized"}
        build = make_dense_ensemble
    elif kind == "factorized":
        allowed = {"n", "m", "p", "seed"}
        build = make_factorized_ensemble
    else:
        raise ValueError(f"unknown ensemble kind {kind!r}")
    extra = set(spec) - allowed
    if extra:
        raise ValueError(f"unknown ensemble keys: {sorted(extra)}")
    return build(**spec)
