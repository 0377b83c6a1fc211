"""Dimension-wise operators: interleaving, fusion equivalence, gate, costs."""

import numpy as np
import pytest

from dicekit import tensorops as T
from dicekit.dimops import (
    DimConvParams,
    DimFuseParams,
    dimconv_fused,
    dimconv_macs,
    dimconv_unfused,
    dimfuse,
    dimfuse_cost,
    dimfuse_reduction_factor,
    gate_weights,
    se_gate,
    separable_conv,
)
from dicekit.tensorops import ConvKernelBank, KernelError


def test_dimconv_interleaving_order(rng):
    x = rng.standard_normal((1, 3, 5, 4))
    p = DimConvParams.init(3, 5, 4, 3, rng)
    out = dimconv_unfused(x, p)
    assert out.shape == (1, 9, 5, 4)
    np.testing.assert_array_equal(out[:, 0::3], T.depthwise_conv(x, p.k_d))
    np.testing.assert_array_equal(out[:, 1::3], T.widthwise_conv(x, p.k_w))
    np.testing.assert_array_equal(out[:, 2::3], T.heightwise_conv(x, p.k_h))


def test_dimconv_delta_replicates_input(rng):
    x = rng.standard_normal((2, 4, 6, 6))
    p = DimConvParams.delta(4, 6, 6)
    out = dimconv_fused(x, p)
    for k in range(3):
        np.testing.assert_array_equal(out[:, k::3], x)


def test_fused_equals_unfused_bitwise(rng):
    for _ in range(10):
        c = int(rng.integers(1, 10))
        h = int(rng.integers(2, 12))
        w = int(rng.integers(2, 12))
        x = rng.standard_normal((int(rng.integers(1, 3)), c, h, w))
        p = DimConvParams.init(c, h, w, 3, rng)
        np.testing.assert_array_equal(dimconv_fused(x, p), dimconv_unfused(x, p))


def test_dimconv_rejects_off_nominal(rng):
    p = DimConvParams.init(3, 5, 4, 3, rng)
    with pytest.raises(KernelError):
        dimconv_fused(rng.standard_normal((1, 3, 4, 4)), p)
    with pytest.raises(KernelError):
        dimconv_fused(rng.standard_normal((1, 2, 5, 4)), p)


def test_dimfuse_shapes_and_gate_range(rng):
    c = 6
    x = rng.standard_normal((2, 3 * c, 7, 7))
    p = DimFuseParams.init(c, 3, rng)
    out = dimfuse(x, p)
    assert out.shape == (2, c, 7, 7)
    g = gate_weights(x[:, :c * 3:3], p.fc1, p.fc2)
    assert np.all(g > 0) and np.all(g < 1)


def test_dimfuse_rejects_bad_channel_count(rng):
    p = DimFuseParams.init(4, 3, rng)
    with pytest.raises(KernelError):
        dimfuse(rng.standard_normal((1, 10, 5, 5)), p)   # not divisible by 3
    with pytest.raises(KernelError):
        dimfuse(rng.standard_normal((1, 9, 5, 5)), p)    # 3 groups, params want 4


def test_dimfuse_widening_uses_group_conv(rng):
    p = DimFuseParams.init(4, 3, rng, c_out=6)
    assert p.groups == 2            # gcd(4, 6)
    x = rng.standard_normal((1, 12, 5, 5))
    assert dimfuse(x, p).shape == (1, 6, 5, 5)


def test_gate_scales_spatial_path(rng):
    # zero input: spatial path is zero, so the output is zero even though
    # the gate itself sits at sigmoid(0) = 0.5
    c = 4
    p = DimFuseParams.init(c, 3, rng)
    out = dimfuse(np.zeros((1, 3 * c, 6, 6)), p)
    np.testing.assert_array_equal(out, 0)


def test_se_gate_identity_scaling(rng):
    x = rng.standard_normal((2, 4, 5, 5))
    fc1 = np.zeros((1, 4))
    fc2 = np.zeros((4, 1))
    # zero FCs: gate = sigmoid(0) = 0.5 everywhere
    np.testing.assert_allclose(se_gate(x, fc1, fc2), 0.5 * x)


def test_separable_conv_composition(rng):
    x = rng.standard_normal((1, 5, 8, 8))
    bank = ConvKernelBank.random(5, 3, rng)
    pw = rng.standard_normal((7, 5))
    y = separable_conv(x, bank, pw, stride=2)
    ref = T.pointwise_conv(T.depthwise_conv(x, bank, 2), pw)
    np.testing.assert_array_equal(y, ref)


def test_dimconv_macs_formula():
    assert dimconv_macs(4, 8, 8, 3) == 3 * 9 * 8 * 8 * 4
    assert dimconv_macs(1, 1, 1, 1) == 3


def test_reduction_factor_values():
    assert dimfuse_reduction_factor(116, 3) == 2.71875
    assert abs(dimfuse_reduction_factor(10 ** 8, 3) - 3.0) < 1e-6
    # monotone increasing in the channel count
    vals = [dimfuse_reduction_factor(c, 3) for c in (8, 32, 128, 512)]
    assert vals == sorted(vals)


def test_dimfuse_cost_reports_both_accountings():
    cost = dimfuse_cost(116, 28, 28, 3)
    assert cost["closed_form"] == 28 * 28 * 116 * (3 + 9 + 116)
    assert cost["component_sum"] == (3 * 28 * 28 * 116 + 9 * 28 * 28 * 116
                                     + 116 * 116 / 2 + 2 * 28 * 28 * 116)
    assert cost["closed_form"] != cost["component_sum"]
    with pytest.raises(KernelError):
        dimfuse_cost(0, 28, 28, 3)
