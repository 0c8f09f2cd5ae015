"""Cost accounting for the dynamic-convolution front-end.

Two conventions are used deliberately:

* The closed-form comparison (`table1_costs`, `dyconv_oracle`) counts every
  kernel tap, including taps that land in the zero padding, so the scaling
  laws come out exactly: a static K-tap filter costs K*N multiplies, a
  patch-level dynamic filter costs K^2*N in its generator, and the two-branch
  filter's kernel application costs K*N.

* The exact walk (`count_model`) skips taps in the zero padding and itemizes
  the real forward pass.  Divisions, square roots, and nonlinearities are
  tallied as unit-cost multiplies; additions and subtractions as adds;
  flops = mults + adds.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import ContractViolation
from .ldyconv import KERNEL_TAPS, TAP_OFFSETS, LdyParams, _shift, dilated_patches


@dataclass
class CostReport:
    params: int = 0
    mults: int = 0
    adds: int = 0
    aux_space: int = 0

    @property
    def flops(self):
        return self.mults + self.adds

    def __add__(self, other):
        return CostReport(
            params=self.params + other.params,
            mults=self.mults + other.mults,
            adds=self.adds + other.adds,
            aux_space=self.aux_space + other.aux_space,
        )


def table1_costs(K, F, N):
    """Closed-form parameter/time/space comparison of the three filter kinds.

    Returns {"conv": ..., "dyconv": ..., "ldyconv": ...}.  Time counts use
    the dense-tap convention; the lower-order per-clip terms of the two-branch
    filter (the F-dimensional MLP) are excluded here and reported exactly by
    count_model instead.
    """
    if K < 1 or F < 1 or N < 1:
        raise ContractViolation(f"K, F, N must be >= 1, got {(K, F, N)}")
    conv = CostReport(params=K, mults=K * N, adds=(K - 1) * N, aux_space=0)
    dyconv = CostReport(
        params=K * K,
        mults=K * K * N + K * N,
        adds=(K - 1) * K * N + (K - 1) * N,
        aux_space=K * N,
    )
    ldyconv = CostReport(
        params=K * (F + 1),
        mults=K * N,
        adds=(K - 1) * N,
        aux_space=N + K,
    )
    return {"conv": conv, "dyconv": dyconv, "ldyconv": ldyconv}


def _dilated_tap_total(T, F):
    """Total valid (non-padding) taps of the dilation-2 3x3 conv over T x F."""
    rt = sum(sum(1 for dt in (-2, 0, 2) if 0 <= t + dt < T) for t in range(T))
    rf = sum(sum(1 for df in (-2, 0, 2) if 0 <= f + df < F) for f in range(F))
    return rt * rf


def _conv_cost(T, F):
    taps = _dilated_tap_total(T, F)
    return CostReport(mults=taps, adds=taps - T * F)


def _temporal_norm_cost(T, F):
    N = T * F
    # mean: F*(T-1) adds, F divs; center: N subs; var: N squares,
    # F*(T-1) adds, F divs; std: F eps-adds, F sqrts; scale: N divs;
    # affine: N mults + N adds.
    return CostReport(
        mults=3 * N + 3 * F,
        adds=2 * F * (T - 1) + 2 * N + F,
    )


def _feature_norm_cost(F):
    return CostReport(mults=3 * F + 3, adds=2 * (F - 1) + F + 1 + F)


def ldyconv_cost_breakdown(K=KERNEL_TAPS, F=40, T=98):
    """Itemized exact cost of one front-end forward pass (factorized path)."""
    if K != KERNEL_TAPS:
        raise ContractViolation(f"front-end walk supports K={KERNEL_TAPS} only")
    N = T * F
    items = {}
    items["pdf_conv"] = _conv_cost(T, F) + CostReport(params=K)
    items["pdf_norm"] = _temporal_norm_cost(T, F) + CostReport(params=2 * F)
    items["pdf_sigmoid"] = CostReport(mults=N)
    idf = CostReport(params=F * F + F + F * K + K + 2 * F)
    idf += CostReport(adds=F * (T - 1), mults=F)  # temporal mean
    idf += CostReport(mults=F * F, adds=(F - 1) * F + F)  # fc1 + bias
    idf += _feature_norm_cost(F)
    idf += CostReport(mults=F)  # relu
    idf += CostReport(mults=F * K, adds=(F - 1) * K + K)  # fc2 + bias
    items["idf"] = idf
    items["dyn_conv"] = _conv_cost(T, F) + CostReport(mults=N)  # conv + pixel scale
    items["out_norm"] = _temporal_norm_cost(T, F) + CostReport(params=2 * F)
    items["skip_add"] = CostReport(adds=N)
    total = CostReport(aux_space=N + K)
    for item in items.values():
        total = total + item
    items["total"] = total
    return items


def count_model(n_freq=40, n_frames=98, params=None):
    """Exact front-end cost at the given map size.

    The parameter count is cross-checked against a concrete LdyParams
    enumeration when one is supplied.
    """
    items = ldyconv_cost_breakdown(F=n_freq, T=n_frames)
    total = items["total"]
    if params is not None:
        enumerated = sum(t.size for t in params.named_tensors().values())
        if enumerated != total.params:
            raise ContractViolation(
                f"cost walk counted {total.params} parameters but the "
                f"parameter set holds {enumerated}"
            )
    return total


def count_params(params):
    """Number of scalars in a parameter container (LdyParams or BackboneParams)."""
    return int(sum(np.asarray(t).size for t in params.named_tensors().values()))


@dataclass
class DyConvCounts:
    generator_mults: int
    generator_adds: int
    apply_mults: int
    apply_adds: int

    @property
    def mults(self):
        return self.generator_mults + self.apply_mults


def dyconv_oracle(x, seed=0):
    """Reference patch-level dynamic convolution, with instrumented counts.

    A K^2-parameter filter generator (one K-tap conv per output tap) produces
    a full kernel at every pixel, which is then applied as a per-pixel
    convolution.  Counts use the dense-tap convention so generator multiplies
    are exactly K^2*N and application multiplies exactly K*N.
    """
    x = np.asarray(x, dtype=np.float64)
    T, F = x.shape
    N = T * F
    K = KERNEL_TAPS
    rng = np.random.default_rng(seed)
    gen = rng.uniform(-1, 1, (K, K)) / np.sqrt(K)

    patches = dilated_patches(x)  # (T, F, K)
    kernels = np.einsum("tfj,kj->tfk", patches, gen)
    counts_gen_mults = K * K * N
    counts_gen_adds = (K - 1) * K * N
    out = np.einsum("tfk,tfk->tf", patches, kernels)
    counts = DyConvCounts(
        generator_mults=counts_gen_mults,
        generator_adds=counts_gen_adds,
        apply_mults=K * N,
        apply_adds=(K - 1) * N,
    )
    return out, counts


def ldyconv_apply_mults(K, N):
    """Dense-tap multiply count of the two-branch filter's kernel path."""
    return K * N


def bench(forward, make_input, repetitions=5):
    """Median/IQR wall time of `forward(make_input())` after one warmup."""
    if repetitions < 3:
        raise ContractViolation(f"repetitions must be >= 3, got {repetitions}")
    x = make_input()
    forward(x)  # warmup
    times = []
    for _ in range(repetitions):
        x = make_input()
        t0 = time.perf_counter()
        forward(x)
        times.append(time.perf_counter() - t0)
    q1, med, q3 = np.percentile(times, [25, 50, 75])
    return {"median_s": float(med), "iqr_s": float(q3 - q1), "n": repetitions}
