"""Self-check suites: kernel/oracle equivalence, gradient spot checks, and
cost-formula cross-checks. The CLI surfaces these as `verify --suite ...`;
the test suite drives them directly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import oracle as orc
from . import tensorops as T
from .dimops import (
    DimConvParams,
    dimconv_fused,
    dimconv_macs,
    dimconv_unfused,
    dimfuse_cost,
    dimfuse_reduction_factor,
)
from .tensorops import ConvKernelBank

SUITES = ("kernels", "gradients", "flops")


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_err: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        msg = f"[{status}] {self.name}: max_err={self.max_err:.3e}"
        return msg + (f" ({self.detail})" if self.detail else "")


def _rand_shape(rng, cmax=12, smax=14):
    return (int(rng.integers(1, 3)), int(rng.integers(1, cmax)),
            int(rng.integers(2, smax)), int(rng.integers(2, smax)))


def _bitwise(name, fast, ref) -> CheckResult:
    same = fast.shape == ref.shape and np.array_equal(fast, ref)
    err = 0.0 if same else float(np.abs(fast - ref).max())
    return CheckResult(name, same, err)


def run_kernels(seed: int = 0, draws: int = 10, fault: str | None = None):
    """Fast kernels against the naive oracle, bitwise in f64.

    `fault` perturbs the named fast path before comparison; it exists so the
    harness can prove a broken kernel is actually detected.
    """
    rng = np.random.default_rng(seed)
    results = []
    worst = {}

    def record(kind, check):
        prev = worst.get(kind)
        if prev is None or (prev.passed and not check.passed) \
                or check.max_err > prev.max_err:
            worst[kind] = check

    for _ in range(draws):
        nb, c, h, w = _rand_shape(rng)
        n = int(rng.choice([1, 3, 5]))
        x = rng.standard_normal((nb, c, h, w))
        stride = int(rng.choice([1, 2]))

        bank = ConvKernelBank.random(c, n, rng)
        ref, _ = orc.oracle_depthwise(x, bank, stride)
        record("depth", _bitwise("depth", T.depthwise_conv(x, bank, stride), ref))

        bank = ConvKernelBank.random(w, n, rng)
        ref, _ = orc.oracle_widthwise(x, bank)
        record("width", _bitwise("width", T.widthwise_conv(x, bank), ref))

        bank = ConvKernelBank.random(h, n, rng)
        ref, _ = orc.oracle_heightwise(x, bank)
        record("height", _bitwise("height", T.heightwise_conv(x, bank), ref))

        weights = rng.standard_normal((int(rng.integers(1, 8)), c))
        ref, _ = orc.oracle_pointwise(x, weights, 1, stride)
        record("pointwise",
               _bitwise("pointwise", T.pointwise_conv(x, weights, 1, stride), ref))

        groups = int(rng.choice([1, 2]))
        fin = 2 * groups * int(rng.integers(1, 5))
        fout = groups * int(rng.integers(1, 5))
        xf = rng.standard_normal((nb, fin))
        wf = rng.standard_normal((fout, fin // groups))
        ref, _ = orc.oracle_linear(xf, wf, groups)
        record("grouped", _bitwise("grouped", T.linear(xf, wf, groups), ref))

        p = DimConvParams.init(c, h, w, n, rng)
        fused = dimconv_fused(x, p)
        if fault == "dimconv":
            fused = fused.copy()
            fused.flat[0] += 1e-6
        ref, _ = orc.oracle_dimconv(x, p)
        record("dimconv", _bitwise("dimconv", fused, ref))
        record("dimconv_fusion",
               _bitwise("dimconv_fusion", fused, dimconv_unfused(x, p)))

    results = [worst[k] for k in sorted(worst)]
    return results


def _rel_err(a, b, floor=1e-7):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def grad_check(name, loss_of, analytic_grad_of, theta0, h=1e-5,
               threshold=1e-4) -> CheckResult:
    """Compare an analytic parameter gradient against central differences."""
    analytic = analytic_grad_of(theta0)
    numeric = orc.finite_diff_grad(lambda t: loss_of(t), theta0, h)
    err = _rel_err(analytic, numeric)
    return CheckResult(name, err < threshold, err)


def run_gradients(seed: int = 0):
    """Spot checks of a few backward passes on tiny shapes."""
    rng = np.random.default_rng(seed)
    results = []
    x = rng.standard_normal((2, 3, 5, 4))
    wgt = rng.standard_normal((2, 3, 5, 4))

    def dw_loss(t):
        return np.sum(T.depthwise_conv(x, ConvKernelBank(t)) * wgt)

    def dw_grad(t):
        tv = ag.param(t.copy())
        loss = ag.sum_all(ag.mul(ag.depthwise(ag.Var(x), tv), ag.Var(wgt)))
        ag.backward(loss)
        return tv.grad

    results.append(grad_check("depthwise.taps", dw_loss, dw_grad,
                              rng.standard_normal((3, 3, 3))))

    pw = rng.standard_normal((4, 3))

    def pw_loss(w):
        return np.sum(T.pointwise_conv(x, w) ** 2)

    def pw_grad(w):
        wv = ag.param(w.copy())
        y = ag.pointwise(ag.Var(x), wv)
        loss = ag.sum_all(ag.mul(y, y))
        ag.backward(loss)
        return wv.grad

    results.append(grad_check("pointwise.weights", pw_loss, pw_grad, pw))

    p = DimConvParams.init(3, 5, 4, 3, rng)

    def dc_loss(kd):
        pp = DimConvParams(ConvKernelBank(kd), p.k_w, p.k_h)
        return np.sum(dimconv_fused(x, pp) ** 2)

    def dc_grad(kd):
        kv = ag.param(kd.copy())
        y = ag.dimconv(ag.Var(x), kv, ag.Var(p.k_w.taps), ag.Var(p.k_h.taps))
        loss = ag.sum_all(ag.mul(y, y))
        ag.backward(loss)
        return kv.grad

    results.append(grad_check("dimconv.k_d", dc_loss, dc_grad, p.k_d.taps.copy()))

    def in_loss(xi):
        return np.sum(T.pool(xi, "avg", 3, 2) * wgt[:, :, :3, :2])

    def in_grad(xi):
        xv = ag.param(xi.copy())
        loss = ag.sum_all(ag.mul(ag.avg_pool(xv, 3, 2), ag.Var(wgt[:, :, :3, :2])))
        ag.backward(loss)
        return xv.grad

    results.append(grad_check("avg_pool.input", in_loss, in_grad, x.copy()))
    return results


def run_flops():
    """Cost-model cross-checks against the oracle MAC tally."""
    results = []
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 4, 8, 8))
    p = DimConvParams.init(4, 8, 8, 3, rng)
    _, counter = orc.oracle_dimconv(x, p)
    expect = dimconv_macs(4, 8, 8, 3)
    results.append(CheckResult("dimconv.macs", counter.mac_count == expect,
                               abs(counter.mac_count - expect),
                               f"counter={counter.mac_count} formula={expect}"))
    rf = dimfuse_reduction_factor(116, 3)
    results.append(CheckResult("dimfuse.reduction_factor", abs(rf - 2.71875) < 1e-12,
                               abs(rf - 2.71875), f"D=116,n=3 -> {rf}"))
    big = dimfuse_reduction_factor(10 ** 9, 3)
    results.append(CheckResult("dimfuse.reduction_limit", abs(big - 3.0) < 1e-6,
                               abs(big - 3.0), "D -> inf"))
    cost = dimfuse_cost(116, 28, 28, 3)
    results.append(CheckResult(
        "dimfuse.accountings", cost["closed_form"] != cost["component_sum"],
        0.0, f"closed_form={cost['closed_form']} "
             f"component_sum={cost['component_sum']:.0f}"))
    return results


def run_suite(name: str, seed: int = 0, fault: str | None = None):
    """Run one suite (or 'all'); returns (results, all_passed)."""
    if name == "all":
        results = []
        for suite in SUITES:
            results += run_suite(suite, seed, fault)[0]
        return results, all(r.passed for r in results)
    if name == "kernels":
        results = run_kernels(seed, fault=fault)
    elif name == "gradients":
        results = run_gradients(seed)
    elif name == "flops":
        results = run_flops()
    else:
        raise ValueError(f"unknown suite {name!r}")
    return results, all(r.passed for r in results)
