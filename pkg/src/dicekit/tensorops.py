"""Primitive CPU kernels over dense 4D (N, C, H, W) float tensors.

Tensors are plain C-contiguous numpy arrays of float32 or float64.
Every kernel is a pure function: inputs are never modified and repeated
calls produce bit-identical outputs.

All convolution kernels accumulate in float64 with a fixed tap order
(row-major over the tap grid) so that results match the naive loop
oracle bit-for-bit in float64 and after a single final rounding in
float32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class KernelError(ValueError):
    """Raised when a kernel precondition is violated."""


def check_tensor(x: np.ndarray) -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise KernelError(f"expected a 4D (N,C,H,W) array, got {getattr(x, 'shape', None)}")
    if x.dtype.type not in FLOAT_DTYPES:
        raise KernelError(f"expected float32/float64 tensor, got dtype {x.dtype}")
    if min(x.shape) < 1:
        raise KernelError(f"all tensor dims must be >= 1, got {x.shape}")
    return x


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class ConvKernelBank:
    """A bank of per-index 2D kernels: taps has shape (count, n, n)."""

    taps: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.taps.ndim != 3 or self.taps.shape[1] != self.taps.shape[2]:
            raise KernelError(f"taps must be (count, n, n), got {self.taps.shape}")
        if self.n % 2 == 0:
            raise KernelError(f"kernel extent must be odd, got n={self.n}")
        if self.bias is not None and self.bias.shape != (self.count,):
            raise KernelError("bias length must equal kernel count")

    @property
    def count(self) -> int:
        return self.taps.shape[0]

    @property
    def n(self) -> int:
        return self.taps.shape[1]

    @staticmethod
    def delta(count: int, n: int = 3, dtype=np.float64) -> "ConvKernelBank":
        """Identity bank: center tap 1, everything else 0."""
        taps = np.zeros((count, n, n), dtype=dtype)
        taps[:, n // 2, n // 2] = 1.0
        return ConvKernelBank(taps)

    @staticmethod
    def random(count: int, n: int, rng: np.random.Generator, dtype=np.float64,
               scale: float | None = None) -> "ConvKernelBank":
        if scale is None:
            scale = math.sqrt(2.0 / (n * n))
        taps = rng.normal(0.0, scale, size=(count, n, n)).astype(dtype)
        return ConvKernelBank(taps)


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        c = self.gamma.shape[0]
        for name in ("beta", "running_mean", "running_var"):
            if getattr(self, name).shape != (c,):
                raise KernelError(f"batch-norm {name} must have length {c}")
        if self.eps <= 0:
            raise KernelError(f"batch-norm eps must be positive, got {self.eps}")

    @staticmethod
    def identity(c: int, dtype=np.float64) -> "BatchNormParams":
        return BatchNormParams(
            gamma=np.ones(c, dtype=dtype),
            beta=np.zeros(c, dtype=dtype),
            running_mean=np.zeros(c, dtype=dtype),
            running_var=np.ones(c, dtype=dtype),
        )


def _pad_hw(x64, p, ho, wo, stride, n):
    # right-side padding is sized so strided slicing never runs off the array
    h, w = x64.shape[2], x64.shape[3]
    prh = max(0, (ho - 1) * stride + n - 1 - p - (h - 1))
    prw = max(0, (wo - 1) * stride + n - 1 - p - (w - 1))
    return np.pad(x64, ((0, 0), (0, 0), (p, prh), (p, prw)))


def depthwise_conv(x: np.ndarray, bank: ConvKernelBank, stride: int = 1) -> np.ndarray:
    """Per-channel n x n spatial convolution, zero padding, 'same' grid."""
    check_tensor(x)
    nb, c, h, w = x.shape
    if bank.count != c:
        raise KernelError(f"depthwise bank has {bank.count} kernels for {c} channels")
    if stride < 1:
        raise KernelError(f"stride must be >= 1, got {stride}")
    n = bank.n
    p = (n - 1) // 2
    ho, wo = ceil_div(h, stride), ceil_div(w, stride)
    xp = _pad_hw(x.astype(np.float64, copy=False), p, ho, wo, stride, n)
    taps = bank.taps.astype(np.float64, copy=False)
    acc = np.zeros((nb, c, ho, wo), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            acc += taps[:, i, j][None, :, None, None] * \
                xp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
    if bank.bias is not None:
        acc += bank.bias.astype(np.float64)[None, :, None, None]
    return acc.astype(x.dtype)


def widthwise_conv(x: np.ndarray, bank: ConvKernelBank) -> np.ndarray:
    """One n x n kernel per width index, spanning the (channel, height) plane."""
    check_tensor(x)
    nb, c, h, w = x.shape
    if bank.count != w:
        raise KernelError(f"widthwise bank has {bank.count} kernels for width {w}")
    n = bank.n
    p = (n - 1) // 2
    xp = np.pad(x.astype(np.float64, copy=False), ((0, 0), (p, p), (p, p), (0, 0)))
    taps = bank.taps.astype(np.float64, copy=False)
    acc = np.zeros((nb, c, h, w), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            acc += taps[:, i, j][None, None, None, :] * xp[:, i:i + c, j:j + h, :]
    if bank.bias is not None:
        acc += bank.bias.astype(np.float64)[None, None, None, :]
    return acc.astype(x.dtype)


def heightwise_conv(x: np.ndarray, bank: ConvKernelBank) -> np.ndarray:
    """One n x n kernel per height index, spanning the (channel, width) plane."""
    check_tensor(x)
    nb, c, h, w = x.shape
    if bank.count != h:
        raise KernelError(f"heightwise bank has {bank.count} kernels for height {h}")
    n = bank.n
    p = (n - 1) // 2
    xp = np.pad(x.astype(np.float64, copy=False), ((0, 0), (p, p), (0, 0), (p, p)))
    taps = bank.taps.astype(np.float64, copy=False)
    acc = np.zeros((nb, c, h, w), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            acc += taps[:, i, j][None, None, :, None] * xp[:, i:i + c, :, j:j + w]
    if bank.bias is not None:
        acc += bank.bias.astype(np.float64)[None, None, :, None]
    return acc.astype(x.dtype)


def pointwise_conv(x: np.ndarray, weights: np.ndarray, groups: int = 1,
                   stride: int = 1, bias: np.ndarray | None = None) -> np.ndarray:
    """1x1 convolution: weights has shape (C_out, C_in // groups).

    Accumulates sequentially over input channels so the result matches the
    per-pixel dot-product oracle exactly.
    """
    check_tensor(x)
    nb, c, h, w = x.shape
    if weights.ndim != 2:
        raise KernelError(f"pointwise weights must be 2D, got {weights.shape}")
    cout = weights.shape[0]
    if c % groups != 0 or cout % groups != 0:
        raise KernelError(f"channels in={c}, out={cout} not divisible by groups={groups}")
    cig = c // groups
    if weights.shape[1] != cig:
        raise KernelError(f"weight rows have {weights.shape[1]} coefficients, expected {cig}")
    if stride < 1:
        raise KernelError(f"stride must be >= 1, got {stride}")
    xs = x[:, :, ::stride, ::stride].astype(np.float64, copy=False)
    w64 = weights.astype(np.float64, copy=False)
    cog = cout // groups
    acc = np.zeros((nb, cout, xs.shape[2], xs.shape[3]), dtype=np.float64)
    for g in range(groups):
        xg = xs[:, g * cig:(g + 1) * cig]
        wg = w64[g * cog:(g + 1) * cog]
        out_g = acc[:, g * cog:(g + 1) * cog]
        for ci in range(cig):
            out_g += wg[:, ci][None, :, None, None] * xg[:, ci][:, None]
    if bias is not None:
        acc += bias.astype(np.float64)[None, :, None, None]
    return acc.astype(x.dtype)


def conv2d(x: np.ndarray, weights: np.ndarray, stride: int = 1,
           bias: np.ndarray | None = None) -> np.ndarray:
    """Standard dense convolution, weights (C_out, C_in, n, n), same padding."""
    check_tensor(x)
    nb, c, h, w = x.shape
    cout, cin, n, n2 = weights.shape
    if cin != c or n != n2 or n % 2 == 0:
        raise KernelError(f"bad conv2d weights {weights.shape} for input {x.shape}")
    if stride < 1:
        raise KernelError(f"stride must be >= 1, got {stride}")
    p = (n - 1) // 2
    ho, wo = ceil_div(h, stride), ceil_div(w, stride)
    xp = _pad_hw(x.astype(np.float64, copy=False), p, ho, wo, stride, n)
    w64 = weights.astype(np.float64, copy=False)
    acc = np.zeros((nb, cout, ho, wo), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            patch = xp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
            acc += np.einsum("nchw,oc->nohw", patch, w64[:, :, i, j])
    if bias is not None:
        acc += bias.astype(np.float64)[None, :, None, None]
    return acc.astype(x.dtype)


def pool(x: np.ndarray, kind: str, k: int = 3, stride: int = 1) -> np.ndarray:
    """Pooling: kind is 'avg', 'max' or 'global_avg'."""
    check_tensor(x)
    if stride < 1:
        raise KernelError(f"stride must be >= 1, got {stride}")
    nb, c, h, w = x.shape
    if kind == "global_avg":
        return x.astype(np.float64, copy=False).mean(axis=(2, 3), keepdims=True).astype(x.dtype)
    if kind not in ("avg", "max"):
        raise KernelError(f"unknown pool kind {kind!r}")
    p = (k - 1) // 2
    ho, wo = ceil_div(h, stride), ceil_div(w, stride)
    fill = 0.0 if kind == "avg" else -np.inf
    x64 = x.astype(np.float64, copy=False)
    prh = max(0, (ho - 1) * stride + k - 1 - p - (h - 1))
    prw = max(0, (wo - 1) * stride + k - 1 - p - (w - 1))
    xp = np.pad(x64, ((0, 0), (0, 0), (p, prh), (p, prw)), constant_values=fill)
    acc = np.full((nb, c, ho, wo), 0.0 if kind == "avg" else -np.inf)
    inv = 1.0 / (k * k)
    for i in range(k):
        for j in range(k):
            win = xp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
            if kind == "avg":
                acc += inv * win
            else:
                np.maximum(acc, win, out=acc)
    return acc.astype(x.dtype)


def batch_norm(x: np.ndarray, p: BatchNormParams, mode: str = "infer",
               momentum: float = 0.1) -> np.ndarray:
    """Per-channel normalization.

    'infer' uses the stored running statistics; 'train' normalizes with the
    batch statistics (biased variance) and updates the running stats in place
    with the given momentum.
    """
    check_tensor(x)
    if x.shape[1] != p.gamma.shape[0]:
        raise KernelError(f"batch-norm sized for {p.gamma.shape[0]} channels, input has {x.shape[1]}")
    x64 = x.astype(np.float64, copy=False)
    if mode == "infer":
        mean, var = p.running_mean, p.running_var
    elif mode == "train":
        mean = x64.mean(axis=(0, 2, 3))
        var = x64.var(axis=(0, 2, 3))
        p.running_mean[:] = (1.0 - momentum) * p.running_mean + momentum * mean
        p.running_var[:] = (1.0 - momentum) * p.running_var + momentum * var
    else:
        raise KernelError(f"unknown batch-norm mode {mode!r}")
    inv = p.gamma / np.sqrt(var + p.eps)
    out = (x64 - mean[None, :, None, None]) * inv[None, :, None, None] \
        + p.beta[None, :, None, None]
    return out.astype(x.dtype)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def prelu(x: np.ndarray, slope) -> np.ndarray:
    """slope is a scalar or a per-channel vector."""
    s = np.asarray(slope, dtype=x.dtype)
    if s.ndim == 1:
        s = s[None, :, None, None] if x.ndim == 4 else s[None, :]
    return np.where(x >= 0, x, s * x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x64 = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x64)
    pos = x64 >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x64[pos]))
    e = np.exp(x64[~pos])
    out[~pos] = e / (1.0 + e)
    return out.astype(np.asarray(x).dtype)


def activation(x: np.ndarray, kind: str, slope=None) -> np.ndarray:
    if kind == "relu":
        return relu(x)
    if kind == "prelu":
        return prelu(x, 0.25 if slope is None else slope)
    if kind == "sigmoid":
        return sigmoid(x)
    raise KernelError(f"unknown activation {kind!r}")


def linear(x: np.ndarray, weights: np.ndarray, groups: int = 1,
           bias: np.ndarray | None = None) -> np.ndarray:
    """Block-diagonal matrix product: x (N, F_in), weights (F_out, F_in // groups).

    Group g maps input slice g to output slice g. Sequential accumulation
    over input features, matching the oracle.
    """
    if x.ndim != 2:
        raise KernelError(f"linear expects (N, F) input, got {x.shape}")
    fin = x.shape[1]
    fout = weights.shape[0]
    if fin % groups != 0 or fout % groups != 0:
        raise KernelError(f"features in={fin}, out={fout} not divisible by groups={groups}")
    fig, fog = fin // groups, fout // groups
    if weights.shape[1] != fig:
        raise KernelError(f"weight rows have {weights.shape[1]} coefficients, expected {fig}")
    x64 = x.astype(np.float64, copy=False)
    w64 = weights.astype(np.float64, copy=False)
    acc = np.zeros((x.shape[0], fout), dtype=np.float64)
    for g in range(groups):
        xg = x64[:, g * fig:(g + 1) * fig]
        wg = w64[g * fog:(g + 1) * fog]
        out_g = acc[:, g * fog:(g + 1) * fog]
        for f in range(fig):
            out_g += xg[:, f][:, None] * wg[:, f][None, :]
    if bias is not None:
        acc += bias.astype(np.float64)[None, :]
    return acc.astype(x.dtype)


def resize_matrix(src: int, dst: int) -> np.ndarray:
    """Dense (dst, src) bilinear interpolation matrix, half-pixel centers."""
    m = np.zeros((dst, src), dtype=np.float64)
    scale = src / dst
    for d in range(dst):
        s = (d + 0.5) * scale - 0.5
        s = min(max(s, 0.0), src - 1.0)
        lo = int(math.floor(s))
        hi = min(lo + 1, src - 1)
        f = s - lo
        m[d, lo] += 1.0 - f
        m[d, hi] += f
    return m


def bilinear_resize(x: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear interpolation with half-pixel centers (align-corners false)."""
    check_tensor(x)
    if target_h < 1 or target_w < 1:
        raise KernelError(f"resize targets must be >= 1, got {(target_h, target_w)}")
    nb, c, h, w = x.shape
    if (target_h, target_w) == (h, w):
        return x.copy()
    x64 = x.astype(np.float64, copy=False)
    rh = resize_matrix(h, target_h)
    rw = resize_matrix(w, target_w)
    out = np.einsum("ah,nchw->ncaw", rh, x64)
    out = np.einsum("bw,ncaw->ncab", rw, out)
    return out.astype(x.dtype)
