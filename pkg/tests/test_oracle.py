"""The naive reference implementations and the finite-difference checker."""

import numpy as np
import pytest

from dicekit import oracle as orc
from dicekit import tensorops as T
from dicekit.dimops import DimConvParams
from dicekit.oracle import OracleCounter, finite_diff_grad, oracle_conv
from dicekit.tensorops import ConvKernelBank, KernelError


def test_counter_tally():
    c = OracleCounter()
    c.tally()
    c.tally(5)
    assert c.mac_count == 6


def test_depthwise_counter_closed_form(rng):
    x = rng.standard_normal((1, 4, 8, 8))
    bank = ConvKernelBank.random(4, 3, rng)
    _, counter = orc.oracle_depthwise(x, bank)
    assert counter.mac_count == 4 * 8 * 8 * 9


def test_counter_scales_with_batch(rng):
    bank = ConvKernelBank.random(2, 3, rng)
    _, c1 = orc.oracle_depthwise(rng.standard_normal((1, 2, 4, 4)), bank)
    _, c3 = orc.oracle_depthwise(rng.standard_normal((3, 2, 4, 4)), bank)
    assert c3.mac_count == 3 * c1.mac_count


def test_dimconv_counter_is_three_branches(rng):
    x = rng.standard_normal((1, 4, 8, 8))
    p = DimConvParams.init(4, 8, 8, 3, rng)
    _, counter = orc.oracle_dimconv(x, p)
    assert counter.mac_count == 3 * 2304


def test_oracle_conv_dispatch(rng):
    x = rng.standard_normal((1, 3, 5, 5))
    bank = ConvKernelBank.random(3, 3, rng)
    y, _ = oracle_conv(x, "depth", {"bank": bank})
    np.testing.assert_array_equal(y, T.depthwise_conv(x, bank))
    with pytest.raises(KernelError):
        oracle_conv(x, "spectral", {})


def test_oracle_pointwise_stride_and_groups(rng):
    x = rng.standard_normal((1, 4, 6, 6))
    w = rng.standard_normal((4, 2))
    y, counter = orc.oracle_pointwise(x, w, groups=2, stride=2)
    np.testing.assert_array_equal(y, T.pointwise_conv(x, w, groups=2, stride=2))
    assert counter.mac_count == 4 * 2 * 3 * 3


def test_oracle_linear_bias(rng):
    x = rng.standard_normal((2, 4))
    w = rng.standard_normal((3, 4))
    b = rng.standard_normal(3)
    y, counter = orc.oracle_linear(x, w, bias=b)
    np.testing.assert_array_equal(y, T.linear(x, w, bias=b))
    assert counter.mac_count == 2 * 3 * 4


def test_oracle_avg_pool_counts_window(rng):
    x = rng.standard_normal((1, 2, 6, 6))
    y, counter = orc.oracle_avg_pool(x, 3, 2)
    np.testing.assert_array_equal(y, T.pool(x, "avg", 3, 2))
    assert counter.mac_count == 2 * 3 * 3 * 9


def test_oracle_global_avg(rng):
    x = rng.standard_normal((2, 3, 4, 5))
    y, counter = orc.oracle_global_avg(x)
    np.testing.assert_allclose(y, T.pool(x, "global_avg"), atol=1e-13)
    assert counter.mac_count == 2 * 3 * 4 * 5


def test_oracle_bilinear_matches_fast(rng):
    x = rng.standard_normal((1, 2, 6, 5))
    a = orc.oracle_bilinear(x, 9, 8)
    b = T.bilinear_resize(x, 9, 8)
    assert np.abs(a - b).max() < 1e-12


def test_finite_diff_on_quadratic():
    g = finite_diff_grad(lambda p: float(p[0] * p[0]), np.array([3.0]))
    assert abs(g[0] - 6.0) < 1e-6


def test_finite_diff_linear_is_exact():
    w = np.array([2.0, -1.5, 0.25])
    g = finite_diff_grad(lambda p: float(p @ w), np.zeros(3), h=0.1)
    np.testing.assert_allclose(g, w, atol=1e-12)


def test_finite_diff_rejects_bad_inputs():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda p: 0.0, np.zeros(2), h=0.0)
    with pytest.raises(ValueError):
        finite_diff_grad(lambda p: float("nan"), np.zeros(2))
