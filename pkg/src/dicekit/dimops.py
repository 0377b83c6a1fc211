"""Dimension-wise operators: the three-branch convolution, its fused
single-pass variant, the local+global fusion stage, the channel gate, and
the separable-convolution baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensorops import (
    ConvKernelBank,
    KernelError,
    check_tensor,
    conv2d,
    depthwise_conv,
    heightwise_conv,
    linear,
    pointwise_conv,
    pool,
    relu,
    sigmoid,
    widthwise_conv,
)


@dataclass(frozen=True)
class DimConvParams:
    """Kernel banks for the three branches.

    k_d has one n x n kernel per channel, k_w one per width index of the
    nominal grid, k_h one per height index.
    """

    k_d: ConvKernelBank
    k_w: ConvKernelBank
    k_h: ConvKernelBank

    def __post_init__(self):
        if not (self.k_d.n == self.k_w.n == self.k_h.n):
            raise KernelError("all three banks must share the same kernel extent")

    @property
    def n(self) -> int:
        return self.k_d.n

    @property
    def channels(self) -> int:
        return self.k_d.count

    @property
    def nominal_h(self) -> int:
        return self.k_h.count

    @property
    def nominal_w(self) -> int:
        return self.k_w.count

    @staticmethod
    def init(c: int, nominal_h: int, nominal_w: int, n: int,
             rng: np.random.Generator, dtype=np.float64) -> "DimConvParams":
        return DimConvParams(
            k_d=ConvKernelBank.random(c, n, rng, dtype),
            k_w=ConvKernelBank.random(nominal_w, n, rng, dtype),
            k_h=ConvKernelBank.random(nominal_h, n, rng, dtype),
        )

    @staticmethod
    def delta(c: int, nominal_h: int, nominal_w: int, n: int = 3,
              dtype=np.float64) -> "DimConvParams":
        return DimConvParams(
            k_d=ConvKernelBank.delta(c, n, dtype),
            k_w=ConvKernelBank.delta(nominal_w, n, dtype),
            k_h=ConvKernelBank.delta(nominal_h, n, dtype),
        )


def _check_nominal(x, p: DimConvParams):
    nb, c, h, w = x.shape
    if p.k_d.count != c:
        raise KernelError(f"depth bank sized for {p.k_d.count} channels, input has {c}")
    if h != p.nominal_h or w != p.nominal_w:
        raise KernelError(
            f"input spatial size {(h, w)} != nominal {(p.nominal_h, p.nominal_w)}")


def dimconv_unfused(x: np.ndarray, p: DimConvParams) -> np.ndarray:
    """Three-pass reference: run each branch, then interleave channel-wise.

    Output channel 3c+0 is the depth branch for input channel c, 3c+1 the
    width branch, 3c+2 the height branch.
    """
    check_tensor(x)
    _check_nominal(x, p)
    y_d = depthwise_conv(x, p.k_d)
    y_w = widthwise_conv(x, p.k_w)
    y_h = heightwise_conv(x, p.k_h)
    nb, c, h, w = x.shape
    out = np.empty((nb, 3 * c, h, w), dtype=x.dtype)
    out[:, 0::3] = y_d
    out[:, 1::3] = y_w
    out[:, 2::3] = y_h
    return out


def dimconv_fused(x: np.ndarray, p: DimConvParams) -> np.ndarray:
    """Single-pass variant: one padded buffer, one tap sweep, all three dot
    products accumulated per neighborhood. Bit-identical to the unfused
    reference (same per-element accumulation order)."""
    check_tensor(x)
    _check_nominal(x, p)
    nb, c, h, w = x.shape
    n = p.n
    pd = (n - 1) // 2
    xp = np.pad(x.astype(np.float64, copy=False),
                ((0, 0), (pd, pd), (pd, pd), (pd, pd)))
    kd = p.k_d.taps.astype(np.float64, copy=False)
    kw = p.k_w.taps.astype(np.float64, copy=False)
    kh = p.k_h.taps.astype(np.float64, copy=False)
    a_d = np.zeros((nb, c, h, w), dtype=np.float64)
    a_w = np.zeros((nb, c, h, w), dtype=np.float64)
    a_h = np.zeros((nb, c, h, w), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            a_d += kd[:, i, j][None, :, None, None] * xp[:, pd:pd + c, i:i + h, j:j + w]
            a_w += kw[:, i, j][None, None, None, :] * xp[:, i:i + c, j:j + h, pd:pd + w]
            a_h += kh[:, i, j][None, None, :, None] * xp[:, i:i + c, pd:pd + h, j:j + w]
    out = np.empty((nb, 3 * c, h, w), dtype=x.dtype)
    out[:, 0::3] = a_d.astype(x.dtype, copy=False)
    out[:, 1::3] = a_w.astype(x.dtype, copy=False)
    out[:, 2::3] = a_h.astype(x.dtype, copy=False)
    return out


@dataclass(frozen=True)
class DimFuseParams:
    """Local 3-to-1 fusion rows, the spatial kernel, and the gate FC pair.

    k_g:  (C, 3) coefficient rows, one per channel group of the interleaved
          input.
    k_s:  (C_out, C // groups, n, n) spatial kernels; depthwise
          (groups == C == C_out) in the common equal-width case, otherwise a
          group convolution with groups = gcd(C, C_out).
    fc1:  (max(C // 4, 1), C) squeeze weights.
    fc2:  (C_out, max(C // 4, 1)) expand weights.
    """

    k_g: np.ndarray
    k_s: np.ndarray
    fc1: np.ndarray
    fc2: np.ndarray
    groups: int

    def __post_init__(self):
        c = self.k_g.shape[0]
        if self.k_g.ndim != 2 or self.k_g.shape[1] != 3:
            raise KernelError(f"k_g must be (C, 3), got {self.k_g.shape}")
        r = max(c // 4, 1)
        if self.fc1.shape != (r, c):
            raise KernelError(f"fc1 must be ({r}, {c}), got {self.fc1.shape}")
        cout = self.k_s.shape[0]
        if self.fc2.shape != (cout, r):
            raise KernelError(f"fc2 must be ({cout}, {r}), got {self.fc2.shape}")
        if c % self.groups or cout % self.groups:
            raise KernelError(f"groups={self.groups} does not divide widths {c}->{cout}")
        if self.k_s.shape[1] != c // self.groups:
            raise KernelError(f"k_s group width {self.k_s.shape[1]} != {c // self.groups}")
        if self.k_s.shape[2] % 2 == 0 or self.k_s.shape[2] != self.k_s.shape[3]:
            raise KernelError(f"k_s taps must be odd square, got {self.k_s.shape}")

    @property
    def channels(self) -> int:
        return self.k_g.shape[0]

    @property
    def out_channels(self) -> int:
        return self.k_s.shape[0]

    @property
    def n(self) -> int:
        return self.k_s.shape[2]

    @staticmethod
    def init(c: int, n: int, rng: np.random.Generator, c_out: int | None = None,
             dtype=np.float64) -> "DimFuseParams":
        c_out = c if c_out is None else c_out
        groups = c if c_out == c else math.gcd(c, c_out)
        r = max(c // 4, 1)
        cig = c // groups
        return DimFuseParams(
            k_g=rng.normal(0.0, math.sqrt(2.0 / 3.0), size=(c, 3)).astype(dtype),
            k_s=rng.normal(0.0, math.sqrt(2.0 / (cig * n * n)),
                           size=(c_out, cig, n, n)).astype(dtype),
            fc1=rng.normal(0.0, math.sqrt(2.0 / c), size=(r, c)).astype(dtype),
            fc2=rng.normal(0.0, math.sqrt(2.0 / r), size=(c_out, r)).astype(dtype),
            groups=groups,
        )


def grouped_spatial_conv(x: np.ndarray, k_s: np.ndarray, groups: int) -> np.ndarray:
    """n x n group convolution used by the fusion spatial path."""
    c = x.shape[1]
    cout = k_s.shape[0]
    if groups == c == cout:
        return depthwise_conv(x, ConvKernelBank(k_s[:, 0]))
    cig, cog = c // groups, cout // groups
    parts = [conv2d(x[:, g * cig:(g + 1) * cig], k_s[g * cog:(g + 1) * cog])
             for g in range(groups)]
    return np.concatenate(parts, axis=1)


def gate_weights(x: np.ndarray, fc1: np.ndarray, fc2: np.ndarray) -> np.ndarray:
    """Squeeze spatial dims, FC bottleneck with inner ReLU, sigmoid out."""
    z = pool(x, "global_avg").reshape(x.shape[0], x.shape[1])
    a = relu(linear(z, fc1))
    return sigmoid(linear(a, fc2))


def dimfuse(x: np.ndarray, p: DimFuseParams) -> np.ndarray:
    """Fuse an interleaved 3C-channel tensor down to C_out channels.

    Steps: (a) local per-group 3-to-1 fusion, (b) spatial kernel over the
    fused planes, (c) squeeze-gate from the fused planes, (d) per-channel
    scaling of the spatial path by the gate.
    """
    check_tensor(x)
    if x.shape[1] % 3 != 0:
        raise KernelError(f"fusion input channels must be divisible by 3, got {x.shape[1]}")
    c = x.shape[1] // 3
    if p.channels != c:
        raise KernelError(f"fusion params sized for {p.channels} groups, input has {c}")
    y_g = pointwise_conv(x, p.k_g, groups=c)
    y_s = grouped_spatial_conv(y_g, p.k_s, p.groups)
    g = gate_weights(y_g, p.fc1, p.fc2).astype(x.dtype)
    return y_s * g[:, :, None, None]


def se_gate(x: np.ndarray, fc1: np.ndarray, fc2: np.ndarray) -> np.ndarray:
    """Standalone squeeze-excitation gate: x scaled per channel."""
    check_tensor(x)
    g = gate_weights(x, fc1, fc2).astype(x.dtype)
    return x * g[:, :, None, None]


def separable_conv(x: np.ndarray, dw_bank: ConvKernelBank, pw_weights: np.ndarray,
                   stride: int = 1) -> np.ndarray:
    """Depth-wise then point-wise convolution, the baseline this library's
    fused unit replaces."""
    return pointwise_conv(depthwise_conv(x, dw_bank, stride), pw_weights, groups=1)


def dimconv_macs(c: int, h: int, w: int, n: int) -> int:
    """Multiply-accumulates for the three-branch convolution: 3 n^2 H W C."""
    return 3 * n * n * h * w * c


def dimfuse_cost(c: int, h: int, w: int, n: int) -> dict:
    """Both accountings of the fusion stage's cost.

    'closed_form' is the single-expression count H*W*C*(3 + n^2 + C);
    'component_sum' adds up the described sub-operations (local fusion,
    spatial kernel, gate FC pair, squeeze and scale). The closed form
    contains a C^2*H*W-scale term no sub-operation produces, so the two
    disagree by construction; both are reported rather than reconciled.
    """
    if min(c, h, w, n) < 1:
        raise KernelError("cost arguments must be positive")
    closed = h * w * c * (3 + n * n + c)
    components = 3 * h * w * c + n * n * h * w * c + c * c / 2 + 2 * h * w * c
    return {
        "closed_form": closed,
        "component_sum": components,
        "reduction_factor": dimfuse_reduction_factor(c, n),
    }


def dimfuse_reduction_factor(c: int, n: int) -> float:
    """Cost ratio of a plain point-wise fusion to this fusion: 3C / (3 + n^2 + C)."""
    return 3.0 * c / (3 + n * n + c)
