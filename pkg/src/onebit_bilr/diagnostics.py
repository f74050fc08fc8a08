"""Empirical checks of the isometry and consistency properties behind recovery.

Every Monte-Carlo quantity here is an empirical *lower bound* on the
corresponding worst case: an implied isometry constant is the largest
distortion seen over the sampled points, and a consistency probe reports the
farthest consistent pair it managed to find.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._random import derive_seed, make_rng
from .matrix_core import ShapeError, as_matrix, frobenius_inner, generate_bilr
from .operators import hard_threshold_rows, project_bilr_exhaustive
from .sensing import Ensemble, FactorizedEnsemble, quantize, sense_inner, sense_raw, sense_raw_batch

PROPERTY_KINDS = ("l1-bilr", "l1-rank", "l2-sparse-vector")


@dataclass(frozen=True)
class RipReport:
    """Distortion statistics of a randomized isometry audit.

    ``implied_delta`` is an empirical lower bound on the true constant.
    """

    samples: int
    ratio_min: float
    ratio_max: float
    ratio_mean: float
    implied_delta: float
    property_kind: str

    @classmethod
    def from_ratios(cls, ratios, kind: str) -> "RipReport":
        if kind not in PROPERTY_KINDS:
            raise ValueError(f"unknown property kind {kind!r}")
        ratios = np.asarray(ratios, dtype=float)
        if ratios.size == 0:
            raise ValueError("no ratios to summarize")
        lo, hi = float(ratios.min()), float(ratios.max())
        # clamp the mean into [lo, hi]; summation rounding could push it out
        mean = min(max(float(ratios.mean()), lo), hi)
        return cls(int(ratios.size), lo, hi, mean, max(1.0 - lo, hi - 1.0), kind)

    def to_dict(self) -> dict:
        return asdict(self)


def rip_audit_bilr(ensemble: Ensemble, s: int, r: int, trials: int, seed: int) -> RipReport:
    """Ratios ``||A(Z)||_1 / ||Z||_F`` over random unit members of the bilr set.

    The ensemble is expected to carry its own normalization. Audit the
    doubled set (``2s``, ``2r``) to check the hypothesis used for projected
    back projection.
    """
    Zs = np.stack([generate_bilr(ensemble.n, s, r, derive_seed(seed, "rip-bilr", k)).dense()
                   for k in range(trials)])
    meas = sense_raw_batch(ensemble, Zs)
    ratios = np.abs(meas).sum(axis=1) / np.linalg.norm(Zs, axis=(1, 2))
    return RipReport.from_ratios(ratios, "l1-bilr")


def rip_audit_rank(ensemble: FactorizedEnsemble, rank: int, trials: int, seed: int) -> RipReport:
    """Ratios ``||A'(Z)||_1 / ||Z||_F`` of the inner map over random rank-``rank`` matrices."""
    p = ensemble.p
    ratios = np.empty(trials)
    for k in range(trials):
        Z = generate_bilr(p, p, rank, derive_seed(seed, "rip-rank", k)).dense()
        ratios[k] = np.abs(sense_inner(ensemble, Z)).sum() / np.linalg.norm(Z)
    return RipReport.from_ratios(ratios, "l1-rank")


def random_sparse_vectors(n: int, k: int, count: int, seed: int) -> np.ndarray:
    """``count`` unit vectors in R^n, each with a uniform random support of size ``min(k, n)``."""
    rng = make_rng(seed, "sparse-vectors")
    k = min(k, n)
    out = np.zeros((count, n))
    for j in range(count):
        sup = rng.choice(n, size=k, replace=False)
        out[j, sup] = rng.standard_normal(k)
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def rip_audit_sparse(D, s: int, trials: int = 500, seed: int = 0, vectors=None) -> RipReport:
    """Ratios ``||Dz||^2 / ||z||^2`` over random unit ``2s``-sparse vectors.

    ``vectors`` (rows) replaces the random draw when given.
    """
    D = as_matrix(D, "D")
    if vectors is None:
        vectors = random_sparse_vectors(D.shape[1], 2 * s, trials, seed)
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    ratios = np.sum((V @ D.T) ** 2, axis=1) / np.sum(V ** 2, axis=1)
    return RipReport.from_ratios(ratios, "l2-sparse-vector")


def support_rip_constant(D, support) -> float:
    """Exact isometry constant of ``D`` restricted to the columns in ``support``."""
    D = as_matrix(D, "D")
    Ds = D[:, list(support)]
    G = Ds.T @ Ds - np.eye(Ds.shape[1])
    return float(np.linalg.norm(G, 2)) if G.size else 0.0


def _row_support(Z: np.ndarray) -> set[int]:
    return set(np.flatnonzero(np.any(Z != 0, axis=1)).tolist())


def polar_rip_check(D, Z, Z2, s: int | None = None) -> float:
    """``|<(I - D^T D) Z, Z2>_F| / (||Z||_F ||Z2||_F)``.

    With ``s`` given, the combined row support of ``Z`` and ``Z2`` must have
    at most ``2s`` rows.
    """
    D = as_matrix(D, "D")
    Z, Z2 = as_matrix(Z, "Z"), as_matrix(Z2, "Z2")
    if Z.shape != Z2.shape or Z.shape[0] != D.shape[1]:
        raise ShapeError(f"incompatible shapes D {D.shape}, Z {Z.shape}, Z2 {Z2.shape}")
    if s is not None and len(_row_support(Z) | _row_support(Z2)) > 2 * s:
        raise ValueError(f"combined row support exceeds 2s = {2 * s}")
    denom = np.linalg.norm(Z) * np.linalg.norm(Z2)
    if denom == 0:
        raise ValueError("polar check undefined for a zero matrix")
    val = frobenius_inner(Z, Z2) - frobenius_inner(D @ Z, D @ Z2)
    return abs(val) / denom


def inexact_threshold_check(D, Z, E, s: int, delta: float | None = None,
                            trials: int = 500, seed: int = 0) -> tuple[float, float]:
    """Row thresholding from inexact measurements ``Y = D Z + E``.

    Returns ``(lhs, rhs)`` with ``lhs = ||Z - H_row_s(D^T Y)||_F`` and
    ``rhs = 2 delta ||Z||_F + 2 sqrt(2) ||E||_F``. Without an explicit
    ``delta`` the implied constant of ``rip_audit_sparse(D, s, trials, seed)``
    is used.
    """
    D, Z, E = as_matrix(D, "D"), as_matrix(Z, "Z"), as_matrix(E, "E")
    if Z.shape[0] != D.shape[1] or E.shape != (D.shape[0], Z.shape[1]):
        raise ShapeError(f"incompatible shapes D {D.shape}, Z {Z.shape}, E {E.shape}")
    if len(_row_support(Z)) > s:
        raise ValueError(f"Z has more than s = {s} nonzero rows")
    if delta is None:
        delta = rip_audit_sparse(D, s, trials, seed).implied_delta
    Y = D @ Z + E
    lhs = float(np.linalg.norm(Z - hard_threshold_rows(D.T @ Y, s)))
    rhs = 2 * delta * float(np.linalg.norm(Z)) + 2 * math.sqrt(2) * float(np.linalg.norm(E))
    return lhs, rhs


def _check_unit(X, name: str) -> np.ndarray:
    X = as_matrix(X, name)
    if abs(np.linalg.norm(X) - 1.0) > 1e-8:
        raise ValueError(f"{name} must have unit Frobenius norm")
    return X


def angular_distance(X, X2) -> float:
    """``arccos(<X, X2>_F) / pi`` for unit matrices.

    Evaluated as ``2 arcsin(||X - X2||_F / 2) / pi``, which is the same angle
    for unit inputs but keeps full precision near 0 where arccos does not.
    """
    half_chord = min(1.0, float(np.linalg.norm(as_matrix(X, "X") - as_matrix(X2, "X2"))) / 2)
    return float(2 * np.arcsin(half_chord) / np.pi)


def local_isometry_stat(X, X2, ensemble: Ensemble) -> tuple[float, float, float]:
    """Normalized Hamming distance of the sign vectors, angular distance, and their gap."""
    X, X2 = _check_unit(X, "X"), _check_unit(X2, "X2")
    signs = quantize(sense_raw_batch(ensemble, np.stack([X, X2])))
    ham = float(np.count_nonzero(signs[0] != signs[1])) / ensemble.m
    ang = angular_distance(X, X2)
    return ham, ang, abs(ham - ang)


def entropy_bound(n: int, s: int, r: int, eta: float) -> float:
    """Covering-number bound ``2s ln(en/s) + r(2s+1) ln(9/eta)`` for the unit bilr set."""
    if not (1 <= r <= s <= n):
        raise ValueError(f"need 1 <= r <= s <= n, got n={n}, s={s}, r={r}")
    if not (0 < eta < 9):
        raise ValueError(f"need 0 < eta < 9, got {eta}")
    return 2 * s * math.log(math.e * n / s) + r * (2 * s + 1) * math.log(9 / eta)


@dataclass(frozen=True)
class ConsistencyProbe:
    """Farthest consistent pair found by :func:`consistency_width_probe`.

    ``samples``/``sample_signs`` hold every unit bilr matrix the search
    evaluated, with its sign vector.
    """

    pair: tuple[np.ndarray, np.ndarray]
    hamming: int
    frobenius_gap: float
    angular_gap: float
    evaluations: int = 0
    samples: np.ndarray | None = field(default=None, repr=False)
    sample_signs: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "hamming": self.hamming,
            "frobenius_gap": self.frobenius_gap,
            "angular_gap": self.angular_gap,
            "evaluations": self.evaluations,
        }


def _unit_bilr_projection(M: np.ndarray, s: int, r: int) -> np.ndarray | None:
    Z, _ = project_bilr_exhaustive(M, s, r)
    Zd = Z.dense()
    nrm = np.linalg.norm(Zd)
    return None if nrm == 0 else Zd / nrm


def consistency_width_probe(n: int, s: int, r: int, ensemble: Ensemble, search_budget: int,
                            seed: int, step0: float = 0.3, min_step: float = 1e-4) -> ConsistencyProbe:
    """Randomized search for a far-apart pair with identical one-bit measurements.

    Each restart draws a random unit bilr matrix ``X`` and hill-climbs a
    partner away from it: a random perturbation of size ``step`` is projected
    back onto the unit bilr set and accepted when it keeps the sign vector of
    ``X`` and increases the distance. Rejections halve the step; the restart
    ends below ``min_step``. ``search_budget`` caps the number of candidate
    evaluations across all restarts. The result lower-bounds the largest
    consistent-pair distance of this ensemble.
    """
    if ensemble.n != n:
        raise ShapeError(f"ensemble dimension {ensemble.n} != n={n}")
    rng = make_rng(seed, "probe-steps")
    samples, signs = [], []
    best = None
    evals, restart = 0, 0
    while evals < search_budget or best is None:
        X = generate_bilr(n, s, r, derive_seed(seed, "probe-start", restart)).dense()
        restart += 1
        yX = quantize(sense_raw(ensemble, X))
        samples.append(X)
        signs.append(yX)
        cur, gap, step = X, 0.0, step0
        while step >= min_step and evals < search_budget:
            G = rng.standard_normal((n, n))
            cand = _unit_bilr_projection(cur + step * G / np.linalg.norm(G), s, r)
            evals += 1
            if cand is None:
                step /= 2
                continue
            yc = quantize(sense_raw(ensemble, cand))
            samples.append(cand)
            signs.append(yc)
            d = float(np.linalg.norm(cand - X))
            if np.array_equal(yc, yX) and d > gap:
                cur, gap = cand, d
            else:
                step /= 2
        if best is None or gap > best[2]:
            best = (X, cur, gap)
    X, X2, gap = best
    ham = int(np.count_nonzero(quantize(sense_raw(ensemble, X)) != quantize(sense_raw(ensemble, X2))))
    return ConsistencyProbe((X, X2), ham, gap, angular_distance(X, X2), evals,
                            np.stack(samples), np.stack(signs))


def minimax_link(samples, signs) -> tuple[float, float]:
    """Finite-sample worst-case errors of consistent recovery.

    Returns ``(e_hat, cw_hat)``: ``e_hat`` is the worst error of the decoder
    that maps a sign vector to the first sample carrying it, ``cw_hat`` the
    largest distance between two samples sharing a sign vector. On any sample
    set ``e_hat <= cw_hat <= 2 * e_hat``.
    """
    samples = np.asarray(samples, dtype=float)
    signs = np.asarray(signs)
    groups: dict[bytes, list[int]] = {}
    for j, y in enumerate(signs):
        groups.setdefault(np.ascontiguousarray(y).tobytes(), []).append(j)
    e_hat = cw_hat = 0.0
    for idx in groups.values():
        pts = samples[idx].reshape(len(idx), -1)
        first = pts[0]
        e_hat = max(e_hat, float(np.max(np.linalg.norm(pts - first, axis=1))))
        if len(idx) > 1:
            diff = pts[:, None, :] - pts[None, :, :]
            cw_hat = max(cw_hat, float(np.max(np.linalg.norm(diff, axis=2))))
    return e_hat, cw_hat
