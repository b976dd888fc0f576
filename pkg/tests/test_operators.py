import numpy as np
import pytest

from lipcert import (
    ConfigError,
    MaterializeCapError,
    ShapeError,
    apply,
    apply_transpose,
    conv2d_operator,
    dense_operator,
    materialize,
    row_norms_masked,
    seeded_fill,
)
from lipcert.oracle import materialize_conv_naive

from conftest import random_conv_cases


def test_dense_identity_apply():
    op = dense_operator(np.eye(3), np.zeros(3))
    out = apply(op, np.array([1.0, 2.0, 3.0]))
    assert np.array_equal(out, [1.0, 2.0, 3.0])


def test_dense_bias_flag():
    op = dense_operator(np.eye(2), np.array([1.0, -1.0]))
    assert np.array_equal(apply(op, np.zeros(2)), [1.0, -1.0])
    assert np.array_equal(apply(op, np.zeros(2), include_bias=False), [0.0, 0.0])


def test_conv_1x1_kernel_scales():
    op = conv2d_operator(np.full((1, 1, 1, 1), 2.0), np.zeros(1), (1, 4, 4))
    x = seeded_fill((1, 4, 4), seed=1)
    assert np.allclose(apply(op, x), 2.0 * x, rtol=0, atol=0)


@pytest.mark.parametrize("case_idx", range(6))
def test_conv_apply_matches_naive_dense(case_idx):
    op, x0, _, _ = random_conv_cases(6, seed=10)[case_idx]
    mat = materialize_conv_naive(op.weights, op.input_shape, op.stride, op.padding)
    want = mat @ x0.ravel()
    got = apply(op, x0, include_bias=False).ravel()
    assert np.allclose(got, want, rtol=1e-9, atol=1e-12)


def test_dense_transpose_basis_gives_rows():
    w = seeded_fill((4, 6), seed=2)
    op = dense_operator(w, np.zeros(4))
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1.0
        assert np.array_equal(apply_transpose(op, e), w[i])


@pytest.mark.parametrize("case_idx", range(6))
def test_adjoint_identity(case_idx):
    op, _, _, _ = random_conv_cases(6, seed=20)[case_idx]
    u = seeded_fill(op.input_shape, seed=100 + case_idx, distribution="gaussian")
    v = seeded_fill(op.output_shape, seed=200 + case_idx, distribution="gaussian")
    lhs = float(np.vdot(apply(op, u, include_bias=False), v))
    rhs = float(np.vdot(u, apply_transpose(op, v)))
    assert abs(lhs - rhs) <= 1e-9 * max(abs(lhs), abs(rhs), 1.0)


def test_conv_transpose_matches_naive_dense():
    op, _, _, _ = random_conv_cases(1, seed=30)[0]
    mat = materialize_conv_naive(op.weights, op.input_shape, op.stride, op.padding)
    v = seeded_fill(op.output_shape, seed=31, distribution="gaussian")
    want = mat.T @ v.ravel()
    got = apply_transpose(op, v).ravel()
    assert np.allclose(got, want, rtol=1e-9, atol=1e-12)


def test_row_norms_dense_examples():
    op = dense_operator(np.array([[3.0, 4.0], [0.0, 1.0]]), np.zeros(2))
    assert np.allclose(row_norms_masked(op, np.ones(2)), [5.0, 1.0])
    assert np.allclose(row_norms_masked(op, np.array([1.0, 0.0])), [3.0, 0.0])


@pytest.mark.parametrize("case_idx", range(4))
def test_row_norms_conv_vs_naive(case_idx):
    op, _, bits, _ = random_conv_cases(4, seed=40)[case_idx]
    mat = materialize_conv_naive(op.weights, op.input_shape, op.stride, op.padding)
    want = np.linalg.norm(mat * bits[None, :], axis=1)
    got = row_norms_masked(op, bits)
    assert np.allclose(got, want, rtol=1e-9, atol=1e-12)


def test_row_norms_batch_size_invariant():
    op, _, bits, _ = random_conv_cases(1, seed=50)[0]
    ref = row_norms_masked(op, bits, batch_size=256)
    for bs in (1, 3, 17, 1000):
        assert np.array_equal(row_norms_masked(op, bits, batch_size=bs), ref)


def test_row_norms_thread_invariant():
    op, _, bits, _ = random_conv_cases(1, seed=55)[0]
    ref = row_norms_masked(op, bits, batch_size=16, threads=1)
    assert np.array_equal(row_norms_masked(op, bits, batch_size=16, threads=4), ref)


def test_row_norms_zero_batch_rejected():
    op = dense_operator(np.eye(2), np.zeros(2))
    with pytest.raises(ConfigError):
        row_norms_masked(op, np.ones(2), batch_size=0)


def test_materialize_dense_returns_weights():
    w = seeded_fill((3, 5), seed=60)
    op = dense_operator(w, np.zeros(3))
    assert np.array_equal(materialize(op), w)


def test_materialize_conv_1x1_pattern():
    op = conv2d_operator(np.full((1, 1, 1, 1), 3.0), np.zeros(1), (1, 2, 2))
    assert np.array_equal(materialize(op), 3.0 * np.eye(4))


def test_materialize_matvec_consistency():
    op, x0, _, _ = random_conv_cases(1, seed=70)[0]
    mat = materialize(op)
    assert np.allclose(mat @ x0.ravel(), apply(op, x0, include_bias=False).ravel(), rtol=1e-9, atol=1e-12)


def test_materialize_cap_refusal():
    op = dense_operator(seeded_fill((40, 40), seed=80), np.zeros(40))
    with pytest.raises(MaterializeCapError):
        materialize(op, cap=100)


def test_gram_map_is_psd():
    op, _, _, _ = random_conv_cases(1, seed=90)[0]
    rng = np.random.Generator(np.random.PCG64(91))
    for _ in range(10):
        x = rng.standard_normal(op.input_shape)
        y = apply(op, x, include_bias=False)
        assert float(np.vdot(x, apply_transpose(op, y))) >= -1e-12


def test_shape_errors():
    op = dense_operator(np.eye(3), np.zeros(3))
    with pytest.raises(ShapeError):
        apply(op, np.zeros(4))
    with pytest.raises(ShapeError):
        apply_transpose(op, np.zeros(4))
    with pytest.raises(ShapeError):
        row_norms_masked(op, np.ones(5))


def test_linearity_of_forward():
    op, _, _, _ = random_conv_cases(1, seed=95)[0]
    rng = np.random.Generator(np.random.PCG64(96))
    x1 = rng.standard_normal(op.input_shape)
    x2 = rng.standard_normal(op.input_shape)
    a, b = 0.7, -1.3
    f = lambda x: apply(op, x) - np.broadcast_to(op.bias[:, None, None], op.output_shape)
    lhs = f(a * x1 + b * x2)
    rhs = a * f(x1) + b * f(x2)
    scale = max(float(np.abs(lhs).max()), 1.0)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-9 * scale)
