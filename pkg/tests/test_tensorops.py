"""Primitive kernel behavior: shapes, error paths, hand-checked values."""

import numpy as np
import pytest

from dicekit import tensorops as T
from dicekit.tensorops import ConvKernelBank, KernelError


def test_check_tensor_rejects_bad_inputs():
    with pytest.raises(KernelError):
        T.check_tensor(np.zeros((3, 4, 5)))
    with pytest.raises(KernelError):
        T.check_tensor(np.zeros((1, 2, 3, 4), dtype=np.int32))
    x = np.zeros((1, 2, 3, 4))
    assert T.check_tensor(x) is x


def test_bank_validation():
    with pytest.raises(KernelError):
        ConvKernelBank(np.zeros((4, 2, 2)))       # even extent
    with pytest.raises(KernelError):
        ConvKernelBank(np.zeros((4, 3, 5)))       # non-square
    bank = ConvKernelBank.delta(4, 3)
    assert bank.count == 4 and bank.n == 3


def test_delta_bank_is_identity(rng):
    x = rng.standard_normal((2, 5, 6, 7))
    bank = ConvKernelBank.delta(5, 3)
    np.testing.assert_array_equal(T.depthwise_conv(x, bank), x)


def test_depthwise_known_value():
    # all-ones input, all-ones 3x3 kernel: interior outputs count 9 taps,
    # corners 4, edges 6
    x = np.ones((1, 1, 4, 4))
    bank = ConvKernelBank(np.ones((1, 3, 3)))
    y = T.depthwise_conv(x, bank)
    assert y[0, 0, 0, 0] == 4.0
    assert y[0, 0, 0, 1] == 6.0
    assert y[0, 0, 1, 1] == 9.0


def test_depthwise_stride_output_shape(rng):
    x = rng.standard_normal((1, 3, 7, 9))
    bank = ConvKernelBank.random(3, 3, rng)
    assert T.depthwise_conv(x, bank, stride=2).shape == (1, 3, 4, 5)


def test_widthwise_mixes_channels_and_height(rng):
    # a width-wise kernel sees a (channel, height) neighborhood: with a
    # single channel and delta-like taps offset in the channel axis the
    # output must be zero (padding), while the center tap reproduces x
    x = rng.standard_normal((1, 1, 5, 4))
    taps = np.zeros((4, 3, 3))
    taps[:, 1, 1] = 1.0
    np.testing.assert_array_equal(T.widthwise_conv(x, ConvKernelBank(taps)), x)
    taps = np.zeros((4, 3, 3))
    taps[:, 0, 1] = 1.0          # looks at channel c-1: all padding here
    np.testing.assert_array_equal(
        T.widthwise_conv(x, ConvKernelBank(taps)), np.zeros_like(x))


def test_heightwise_bank_size_checked(rng):
    x = rng.standard_normal((1, 2, 5, 4))
    with pytest.raises(KernelError):
        T.heightwise_conv(x, ConvKernelBank.random(4, 3, rng))


def test_pointwise_matches_matmul(rng):
    x = rng.standard_normal((2, 6, 3, 3))
    w = rng.standard_normal((4, 6))
    y = T.pointwise_conv(x, w)
    ref = np.einsum("oc,nchw->nohw", w, x)
    assert np.allclose(y, ref, atol=1e-12)


def test_pointwise_groups(rng):
    x = rng.standard_normal((1, 4, 2, 2))
    w = rng.standard_normal((4, 2))
    y = T.pointwise_conv(x, w, groups=2)
    top = np.einsum("oc,nchw->nohw", w[:2], x[:, :2])
    bot = np.einsum("oc,nchw->nohw", w[2:], x[:, 2:])
    assert np.allclose(y, np.concatenate([top, bot], axis=1), atol=1e-12)


def test_conv2d_shape_and_delta(rng):
    x = rng.standard_normal((1, 3, 6, 6))
    w = np.zeros((3, 3, 3, 3))
    for i in range(3):
        w[i, i, 1, 1] = 1.0
    np.testing.assert_array_equal(T.conv2d(x, w), x)
    assert T.conv2d(x, rng.standard_normal((5, 3, 3, 3)), stride=2).shape == (1, 5, 3, 3)


def test_pool_kinds(rng):
    x = rng.standard_normal((1, 2, 6, 6))
    assert T.pool(x, "max", 3, 2).shape == (1, 2, 3, 3)
    g = T.pool(x, "global_avg")
    assert g.shape == (1, 2, 1, 1)
    assert np.allclose(g[0, :, 0, 0], x.mean(axis=(0, 2, 3)))
    with pytest.raises(KernelError):
        T.pool(x, "median")


def test_max_pool_constant_input():
    x = np.full((1, 1, 4, 4), 2.5)
    np.testing.assert_array_equal(T.pool(x, "max", 3, 1), x)


def test_batch_norm_infer_identity(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    p = T.BatchNormParams.identity(3)
    y = T.batch_norm(x, p, "infer")
    assert np.allclose(y, x / np.sqrt(1 + p.eps), atol=1e-12)


def test_batch_norm_train_normalizes_and_updates(rng):
    x = rng.standard_normal((4, 3, 5, 5)) * 3 + 1
    p = T.BatchNormParams.identity(3)
    y = T.batch_norm(x, p, "train")
    assert np.allclose(y.mean(axis=(0, 2, 3)), 0, atol=1e-10)
    assert np.allclose(y.var(axis=(0, 2, 3)), 1, atol=1e-3)
    assert not np.allclose(p.running_mean, 0)
    assert not np.allclose(p.running_var, 1)


def test_activations(rng):
    x = np.array([[-2.0, 0.0, 3.0]])
    np.testing.assert_array_equal(T.relu(x), [[0, 0, 3]])
    np.testing.assert_array_equal(T.prelu(x, 0.25), [[-0.5, 0, 3]])
    s = T.sigmoid(np.array([0.0, 800.0, -800.0]))
    assert np.allclose(s, [0.5, 1.0, 0.0])
    with pytest.raises(KernelError):
        T.activation(x, "swish")


def test_linear_groups_and_bias(rng):
    x = rng.standard_normal((3, 4))
    w = rng.standard_normal((6, 4))
    b = rng.standard_normal(6)
    assert np.allclose(T.linear(x, w, bias=b), x @ w.T + b, atol=1e-12)
    wg = rng.standard_normal((4, 2))
    y = T.linear(x, wg, groups=2)
    assert np.allclose(y[:, :2], x[:, :2] @ wg[:2].T, atol=1e-12)
    assert np.allclose(y[:, 2:], x[:, 2:] @ wg[2:].T, atol=1e-12)


def test_resize_matrix_rows_sum_to_one():
    for src, dst in ((7, 13), (14, 7), (5, 5)):
        m = T.resize_matrix(src, dst)
        assert np.allclose(m.sum(axis=1), 1.0)


def test_bilinear_resize_identity_and_constant(rng):
    x = rng.standard_normal((1, 2, 6, 5))
    np.testing.assert_array_equal(T.bilinear_resize(x, 6, 5), x)
    c = np.full((1, 1, 4, 4), 3.25)
    assert np.allclose(T.bilinear_resize(c, 9, 7), 3.25)


def test_bilinear_round_trip_close(rng):
    # upsample then downsample of a smooth field stays close
    x = np.linspace(0, 1, 36).reshape(1, 1, 6, 6)
    back = T.bilinear_resize(T.bilinear_resize(x, 12, 12), 6, 6)
    assert np.abs(back - x).max() < 0.05


def test_dtype_preserved(rng):
    x = rng.standard_normal((1, 3, 4, 4)).astype(np.float32)
    bank = ConvKernelBank.random(3, 3, rng, dtype=np.float32)
    assert T.depthwise_conv(x, bank).dtype == np.float32
    assert T.pool(x, "avg", 3, 2).dtype == np.float32
