import numpy as np
import pytest

import onebit_bilr.sensing as sensing
from onebit_bilr._random import derive_seed, make_rng
from onebit_bilr.matrix_core import ShapeError, generate_bilr
from onebit_bilr.sensing import (
    DenseEnsemble,
    FactorizedEnsemble,
    adjoint,
    adjoint_lifted,
    ensemble_from_spec,
    make_dense_ensemble,
    make_factorized_ensemble,
    materialize,
    quantize,
    sense_and_back_project,
    sense_inner,
    sense_raw,
    sense_raw_batch,
)


def test_dense_ensemble_deterministic():
    a = make_dense_ensemble(2, 3, seed=1)
    b = make_dense_ensemble(2, 3, seed=1)
    assert a.matrices.tobytes() == b.matrices.tobytes()
    assert a.scale == b.scale == pytest.approx(np.sqrt(np.pi / 2) / 3)


def test_normalized_l1_expectation():
    # E|N(0,1)| = sqrt(2/pi), so the sqrt(pi/2)/m scale gives E||A(Z)||_1 = ||Z||_F = 1
    Z = generate_bilr(3, 2, 1, seed=4).dense()
    vals = [np.abs(sense_raw(make_dense_ensemble(3, 5000, seed=k), Z)).sum() for k in range(200)]
    assert 0.98 <= np.mean(vals) <= 1.02


def test_unnormalized_l1_expectation():
    Z = generate_bilr(3, 2, 1, seed=4).dense()
    m = 5000
    vals = [np.abs(sense_raw(make_dense_ensemble(3, m, seed=k, normalized=False), Z)).sum()
            for k in range(50)]
    assert np.mean(vals) == pytest.approx(m * np.sqrt(2 / np.pi), rel=0.02)


def test_side_matrix_isometry_in_expectation():
    n, p, s = 16, 400, 3
    z = np.zeros(n)
    z[[1, 5, 9, 11, 12, 15]] = make_rng(3).standard_normal(2 * s)
    z /= np.linalg.norm(z)
    vals = [np.sum((make_factorized_ensemble(n, 1, p, seed=k).B @ z) ** 2) for k in range(200)]
    assert 0.95 <= np.mean(vals) <= 1.05


def test_inner_l1_expectation():
    p = 4
    Z = generate_bilr(p, p, 1, seed=2).dense()
    vals = [np.abs(sense_inner(make_factorized_ensemble(2, 5000, p, seed=k), Z)).sum() for k in range(200)]
    assert 0.98 <= np.mean(vals) <= 1.02


def test_materialized_shapes():
    ens = make_factorized_ensemble(5, 7, 3, seed=0)
    mat = materialize(ens)
    assert mat.matrices.shape == (7, 5, 5)
    assert mat.scale == ens.inner_scale


def test_sense_zero_and_trace_example():
    ens = make_dense_ensemble(3, 10, seed=2)
    assert np.all(sense_raw(ens, np.zeros((3, 3))) == 0)
    one = DenseEnsemble.from_matrices([np.eye(2)], scale=0.7)
    assert sense_raw(one, np.diag([1.0, 2.0]))[0] == pytest.approx(3 * 0.7)


def test_factorized_matches_materialized_values():
    ens = make_factorized_ensemble(6, 40, 9, seed=5)
    X = make_rng(1).standard_normal((6, 6))
    a = sense_raw(ens, X)
    b = sense_raw(materialize(ens), X)
    assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)


def test_sense_rejects_bad_shape():
    with pytest.raises(ShapeError):
        sense_raw(make_dense_ensemble(3, 4, seed=0), np.eye(4))


def test_quantize_examples():
    assert quantize([0.3, -2.0, 0.0]).tolist() == [1, -1, 1]
    assert quantize(-np.arange(1.0, 6.0)).tolist() == [-1] * 5
    ens = make_dense_ensemble(4, 50, seed=3)
    X = generate_bilr(4, 2, 1, seed=3).dense()
    assert np.array_equal(quantize(sense_raw(ens, 10 * X)), quantize(sense_raw(ens, X)))


@pytest.mark.parametrize("lam", [1e-6, 0.5, 3.0, 1e6])
def test_positive_scaling_invariance(lam):
    for k in range(20):
        ens = make_dense_ensemble(5, 200, seed=k)
        X = make_rng(k, "x").standard_normal((5, 5))
        assert np.array_equal(quantize(sense_raw(ens, lam * X)), quantize(sense_raw(ens, X)))


def test_adjoint_examples():
    mats = make_rng(0).standard_normal((4, 3, 3))
    ens = DenseEnsemble.from_matrices(mats)
    assert np.array_equal(adjoint(ens, [1, 0, 0, 0]), mats[0])
    assert np.all(adjoint(ens, np.zeros(4)) == 0)
    with pytest.raises(ShapeError):
        adjoint(ens, np.ones(3))


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def test_adjoint_duality_dense_and_factorized():
    for k in range(20):
        rng = make_rng(k, "dual")
        dense = make_dense_ensemble(4, 30, seed=k)
        v, M = rng.standard_normal(30), rng.standard_normal((4, 4))
        assert _rel(np.vdot(adjoint(dense, v), M), v @ sense_raw(dense, M)) <= 1e-10
        fac = make_factorized_ensemble(4, 30, 5, seed=k)
        W = rng.standard_normal((5, 5))
        assert _rel(np.vdot(adjoint(fac, v), W), v @ sense_inner(fac, W)) <= 1e-10
        assert _rel(np.vdot(adjoint_lifted(fac, v), M), v @ sense_raw(fac, M)) <= 1e-10


def test_factorized_sign_identity_bitwise():
    for k in range(100):
        ens = make_factorized_ensemble(8, 64, 12, seed=derive_seed(9, k))
        X = make_rng(k, "sig").standard_normal((8, 8))
        assert np.array_equal(quantize(sense_raw(ens, X)), quantize(sense_raw(materialize(ens), X)))


def test_one_pass_matches_separate_calls():
    for ens in (make_dense_ensemble(5, 300, seed=1), make_factorized_ensemble(5, 300, 7, seed=1)):
        X = generate_bilr(5, 2, 1, seed=1).dense()
        one = sense_and_back_project(ens, X, lift=True)
        raw = sense_raw(ens, X)
        assert np.array_equal(one.raw, raw)
        assert np.array_equal(one.signs, quantize(raw))
        assert np.allclose(one.back_projection, adjoint(ens, one.signs), rtol=0, atol=1e-12)
        assert np.allclose(sense_raw(one.lifted, X), raw, rtol=1e-10, atol=1e-14)


def test_streamed_equals_cached(monkeypatch):
    cached_d = make_dense_ensemble(3, 150, seed=4)
    cached_f = make_factorized_ensemble(3, 150, 4, seed=4)
    monkeypatch.setattr(sensing, "MATERIALIZE_LIMIT", 0)
    streamed_d = make_dense_ensemble(3, 150, seed=4)
    streamed_f = make_factorized_ensemble(3, 150, 4, seed=4)
    assert streamed_d._raw is None and streamed_f._raw is None
    X = make_rng(2).standard_normal((3, 3))
    v = make_rng(3).standard_normal(150)
    assert np.array_equal(sense_raw(cached_d, X), sense_raw(streamed_d, X))
    assert np.array_equal(sense_raw(cached_f, X), sense_raw(streamed_f, X))
    assert np.array_equal(adjoint(cached_f, v), adjoint(streamed_f, v))
    assert np.array_equal(cached_d.matrices, streamed_d.matrices)


def test_spec_roundtrip():
    for ens in (make_dense_ensemble(3, 20, seed=8, normalized=False), make_factorized_ensemble(3, 20, 5, seed=8)):
        spec = ens.to_spec()
        again = ensemble_from_spec(spec)
        X = make_rng(0).standard_normal((3, 3))
        assert np.array_equal(sense_raw(ens, X), sense_raw(again, X))
    assert set(make_factorized_ensemble(3, 20, 5, seed=8).to_spec()) == {"kind", "n", "m", "p", "seed"}
    with pytest.raises(ValueError):
        ensemble_from_spec({"kind": "dense", "n": 2, "m": 2, "seed": 0, "entries": []})
    with pytest.raises(ValueError):
        DenseEnsemble.from_matrices(np.ones((1, 2, 2))).to_spec()


def test_batch_matches_single():
    ens = make_factorized_ensemble(4, 70, 6, seed=0)
    Xs = make_rng(5).standard_normal((3, 4, 4))
    batch = sense_raw_batch(ens, Xs)
    for k in range(3):
        assert np.allclose(batch[k], sense_raw(ens, Xs[k]), rtol=1e-12, atol=1e-15)


def test_factorized_from_matrices_validates():
    with pytest.raises(ShapeError):
        FactorizedEnsemble.from_matrices(np.ones((2, 3, 3)), np.ones((2, 4)), np.ones((2, 4)))
