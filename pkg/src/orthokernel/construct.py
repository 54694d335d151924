"""Explicit construction of orthogonal convolution kernels.

Three building blocks and one adaptive front end:

* `bcop_kernel` / `scfac_kernel` - compose 1x2 and 2x1 projector kernels
  with a 1x1 orthogonal channel map into a k1 x k2 kernel that is
  orthogonal as an unstrided convolution (two composition orders).
* `rko_kernel` - orthogonalize the (c_out) x (c_in*k1*k2) flattening and
  reshape; orthogonal as a strided convolution exactly when k == s.
* `aoc_kernel` - per group, pick the cheapest construction that is
  orthogonal for the requested stride/size and fuse the factors into a
  single kernel via block convolution.

Every builder is deterministic in its seed.  Orthogonality of the results
is established independently by the `verify` module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .blockconv import block_conv_fast, scan_compose
from .orthogonalize import (
    DEFAULT_BETA,
    DEFAULT_ITERS,
    DEFAULT_SCHEME,
    SCHEMES,
    orthogonalize,
    projector_pair,
    sample_params,
)
from .tensor_core import (
    ConvSpec,
    KernelTensor,
    UnsupportedConfigError,
    identity_kernel,
    kernel_transpose,
    spec_for_kernel,
)

ORDERINGS = ("bcop", "scfac")


@dataclass(frozen=True)
class AocConfig:
    """Full recipe for an adaptive orthogonal convolution kernel."""

    spec: ConvSpec
    scheme: str = DEFAULT_SCHEME
    iters: int = DEFAULT_ITERS
    beta: float = DEFAULT_BETA
    seed: int = 0
    ordering: str = "bcop"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {self.ordering!r}")
        if not (0.0 < self.beta <= 0.5):
            raise ValueError(f"beta must lie in (0, 0.5], got {self.beta}")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass(frozen=True)
class BranchTag:
    """Which construction the adaptive builder chose, and why.

    branch "a": unstrided projector composition (s == 1)
    branch "b": reshaped-kernel orthogonalization (k == s)
    branch "c": strided application of a full-size branch-"a" kernel
    branch "d": fusion of an s x s reshaped factor with a
                (k-s+1)-size projector factor
    """

    branch: str
    internal_width: int | None = None
    group_seeds: tuple[int, ...] = ()
    ordering: str = "bcop"
    fallback_from_c: bool = False

    def to_dict(self) -> dict:
        return {
            "branch": self.branch,
            "internal_width": self.internal_width,
            "group_seeds": list(self.group_seeds),
            "ordering": self.ordering,
            "fallback_from_c": self.fallback_from_c,
        }


def _orth(shape, seed, scheme, iters, beta):
    return orthogonalize(sample_params(shape, seed), scheme=scheme, iters=iters, beta=beta)


def _projector_factor(N: np.ndarray, axis: int) -> KernelTensor:
    """1x2 (axis=3) or 2x1 (axis=2) kernel stacking [N, I-N] spatially."""
    c = N.shape[0]
    n4 = N.reshape(c, c, 1, 1)
    c4 = (np.eye(c) - N).reshape(c, c, 1, 1)
    return KernelTensor(np.concatenate([n4, c4], axis=axis))


def _factor_axes(k1: int, k2: int, interleave: bool) -> list[int]:
    """Spatial axes of the projector factors needed for a k1 x k2 kernel:
    (k1-1) vertical (axis 2) and (k2-1) horizontal (axis 3) ones, either
    alternating pairwise or grouped by direction."""
    if interleave:
        axes = []
        for t in range(max(k1 - 1, k2 - 1)):
            if t < k1 - 1:
                axes.append(2)
            if t < k2 - 1:
                axes.append(3)
        return axes
    return [3] * (k2 - 1) + [2] * (k1 - 1)


def _compose_projector_kernel(c_in, c_out, k1, k2, seed, scheme, iters, beta,
                              interleave: bool) -> KernelTensor:
    """Shared body of the two unstrided constructions.

    All projector factors live at width c = max(c_in, c_out).  The 1x1
    channel map sits at the input end (applied first); when c_out < c the
    composed kernel is truncated to its first c_out output channels, which
    preserves row orthogonality (deleting rows of a row-orthogonal matrix
    keeps it row orthogonal).
    """
    if k1 < 1 or k2 < 1:
        raise ValueError(f"kernel size must be >= 1, got {k1}x{k2}")
    if c_in < 1 or c_out < 1:
        raise ValueError("channel counts must be >= 1")
    c = max(c_in, c_out)
    axes = _factor_axes(k1, k2, interleave)
    if axes and c < 2:
        raise UnsupportedConfigError(
            f"projector construction needs a channel width >= 2 for spatial "
            f"kernels, got c_in={c_in}, c_out={c_out}"
        )
    M = _orth((c, c_in), (seed, 0), scheme, iters, beta)
    chain = [KernelTensor(M.reshape(c, c_in, 1, 1))]
    for t, axis in enumerate(axes):
        M0 = _orth((c, c // 2), (seed, 1 + t), scheme, iters, beta)
        chain.append(_projector_factor(projector_pair(M0).N, axis))
    K = scan_compose(chain)
    if c_out < c:
        K = KernelTensor(K.data[:c_out])
    return K


def bcop_kernel(c_in, c_out, k1, k2, seed=0, scheme=DEFAULT_SCHEME,
                iters=DEFAULT_ITERS, beta=DEFAULT_BETA) -> KernelTensor:
    """Unstrided orthogonal kernel from alternating 2x1 / 1x2 projector
    pairs applied after a 1x1 orthogonal channel map.

    The resulting convolution (stride 1, circular padding) is row
    orthogonal when c_out <= c_in and column orthogonal otherwise.
    """
    return _compose_projector_kernel(c_in, c_out, k1, k2, seed, scheme, iters,
                                     beta, interleave=True)


def scfac_kernel(c_in, c_out, k1, k2, seed=0, scheme=DEFAULT_SCHEME,
                 iters=DEFAULT_ITERS, beta=DEFAULT_BETA) -> KernelTensor:
    """Alternative composition order: all 1x2 factors, then all 2x1
    factors (grouped by direction instead of alternating).  Same
    orthogonality contract and parameter count as `bcop_kernel`."""
    return _compose_projector_kernel(c_in, c_out, k1, k2, seed, scheme, iters,
                                     beta, interleave=False)


def projector_param_count(c_in, c_out, k1, k2) -> int:
    """Number of raw parameter entries consumed by either unstrided
    construction for a given shape."""
    c = max(c_in, c_out)
    n_factors = (k1 - 1) + (k2 - 1)
    return c * c_in + n_factors * c * (c // 2)


def rko_kernel(c_in, c_out, k1, k2, seed=0, scheme=DEFAULT_SCHEME,
               iters=DEFAULT_ITERS, beta=DEFAULT_BETA) -> KernelTensor:
    """Orthogonalize the c_out x (c_in*k1*k2) flattening and reshape back.

    The strided convolution with this kernel is orthogonal precisely when
    k1 == k2 == s (non-overlapping receptive fields); for other strides it
    is 1-Lipschitz material but carries no orthogonality claim.
    """
    W = _orth((c_out, c_in * k1 * k2), seed, scheme, iters, beta)
    return KernelTensor(W.reshape(c_out, c_in, k1, k2))


def _unstrided_builder(ordering: str):
    return bcop_kernel if ordering == "bcop" else scfac_kernel


def _build_group_kernel(ci, co, k1, k2, s, cfg: AocConfig, seed):
    """Single-group decision tree; returns (kernel, branch, width, fellback)."""
    build = _unstrided_builder(cfg.ordering)
    kw = dict(scheme=cfg.scheme, iters=cfg.iters, beta=cfg.beta)

    if k1 == s and k2 == s:
        return rko_kernel(ci, co, s, s, seed=seed, **kw), "b", None, False

    if s == 1:
        return build(ci, co, k1, k2, seed=seed, **kw), "a", None, False

    if ci < co:
        # candidate shortcut: an unstrided kernel used directly with stride.
        # Only valid if the strided operator stays orthogonal, which is
        # checked explicitly; on failure the general fusion is used.
        try:
            cand = build(ci, co, k1, k2, seed=seed, **kw)
        except UnsupportedConfigError:
            cand = None
        if cand is not None and _candidate_is_orthogonal(cand, s, cfg):
            return cand, "c", None, False
        fellback = cand is not None
    else:
        fellback = False

    c = max(ci, co // (s * s))
    inner = build(ci, c, k1 - s + 1, k2 - s + 1, seed=seed, **kw)
    # disjoint sub-seed namespace from the projector factors (seed, 0..t)
    outer = rko_kernel(c, co, s, s, seed=(seed, 1 << 20), **kw)
    return block_conv_fast(outer, inner), "d", c, fellback


def _candidate_is_orthogonal(K: KernelTensor, s: int, cfg: AocConfig) -> bool:
    from .verify import check_orthogonality  # deferred: verify imports construct

    h = 8 if 8 % s == 0 else 4 * s
    spec = spec_for_kernel(K, stride=s)
    return check_orthogonality(K, spec, h, h, tolerance=1e-4).passed


def aoc_kernel(cfg: AocConfig) -> tuple[KernelTensor, BranchTag]:
    """Build an orthogonal convolution kernel for an arbitrary valid
    (c_in, c_out, k, s, g, d) configuration.

    Groups are built independently with per-group seeds seed+q and stacked.
    Dilation returns the same kernel (orthogonality transfers to the
    dilated operator); the spec carries d.  Raises UnsupportedConfigError
    for configurations with no orthogonal kernel: s > k, per-group
    projector width < 2 with k > s, and stride sharing a factor with the
    dilation (the read lattice then drops input sites, which no kernel of
    this shape can compensate).
    """
    spec = cfg.spec
    s, g, d = spec.stride, spec.groups, spec.dilation
    k1, k2 = spec.k_h, spec.k_w
    if s > k1 or s > k2:
        raise UnsupportedConfigError(
            f"no orthogonal kernel exists for stride {s} > kernel size {k1}x{k2}"
        )
    if s > 1 and d > 1 and math.gcd(s, d) > 1:
        raise UnsupportedConfigError(
            f"stride {s} and dilation {d} share a common factor; the strided "
            f"dilated convolution never reads part of its input and cannot "
            f"be orthogonal in both directions"
        )
    ci, co = spec.c_in // g, spec.c_out // g
    if max(ci, co) < 2 and (k1 > s or k2 > s):
        raise UnsupportedConfigError(
            f"unsupported configuration: per-group width 1 with kernel "
            f"{k1}x{k2} > stride {s} needs the projector construction, "
            f"which requires at least 2 channels"
        )

    kernels = []
    branch = width = None
    fellback = False
    group_seeds = tuple(cfg.seed + q for q in range(g))
    for seed in group_seeds:
        K_q, branch, width, fellback = _build_group_kernel(ci, co, k1, k2, s, cfg, seed)
        kernels.append(K_q.data)
    K = KernelTensor(np.concatenate(kernels, axis=0), groups=g)
    tag = BranchTag(branch=branch, internal_width=width, group_seeds=group_seeds,
                    ordering=cfg.ordering, fallback_from_c=fellback)
    return K, tag


def transpose_kernel_for(K: KernelTensor, spec: ConvSpec) -> tuple[KernelTensor, ConvSpec]:
    """Kernel/spec pair describing the transposed operator.

    Channel axes are swapped per group and both spatial axes reversed; the
    returned spec swaps c_in and c_out.  `conv2d_transpose_ref` with the
    *original* pair applies this operator; if the original convolution is
    row orthogonal the transposed one is column orthogonal, and composing
    the two gives the identity on the appropriate side.
    """
    g = spec.groups
    ci, co = spec.c_in // g, spec.c_out // g
    parts = [
        kernel_transpose(KernelTensor(K.data[q * co:(q + 1) * co])).data
        for q in range(g)
    ]
    K_t = KernelTensor(np.concatenate(parts, axis=0), groups=g)
    spec_t = replace(spec, c_in=spec.c_out, c_out=spec.c_in)
    return K_t, spec_t


def skew_symmetrize_kernel(K: KernelTensor) -> KernelTensor:
    """K - transpose(K); for odd kernel sizes the induced circular operator
    is exactly skew-symmetric."""
    if K.c_in != K.c_out:
        raise ValueError("skew symmetrization needs square channel counts")
    return KernelTensor(K.data - kernel_transpose(K).data)


def _embed_centered(data: np.ndarray, L1: int, L2: int) -> np.ndarray:
    out = np.zeros((data.shape[0], data.shape[1], L1, L2))
    a = (L1 - data.shape[2]) // 2
    b = (L2 - data.shape[3]) // 2
    out[:, :, a:a + data.shape[2], b:b + data.shape[3]] = data
    return out


def soc_explicit_kernel(K: KernelTensor, terms: int = 12) -> KernelTensor:
    """Truncated exponential series of a kernel under block convolution:

        E = I + K + K.K/2! + ... + K^(terms)/terms!

    computed by accumulating successive fused powers; all terms are
    centre-aligned, so one convolution with E equals applying the truncated
    series term by term.  The result spans terms*(k-1)+1 per axis.  For a
    skew-symmetrized odd-size kernel of operator norm <= 1 the result is
    orthogonal up to the series tail.
    """
    if K.c_in != K.c_out:
        raise ValueError("exponential of a kernel needs square channel counts")
    if terms < 1:
        raise ValueError("terms must be >= 1")
    c, _, kh, kw = K.shape
    L1 = terms * (kh - 1) + 1
    L2 = terms * (kw - 1) + 1
    E = _embed_centered(identity_kernel(c).data, L1, L2)
    power = K
    factorial = 1.0
    for t in range(1, terms + 1):
        factorial *= t
        E += _embed_centered(power.data, L1, L2) / factorial
        if t < terms:
            power = block_conv_fast(K, power)
    return KernelTensor(E)


def soc_normalized_skew(K: KernelTensor) -> KernelTensor:
    """Skew-symmetrize a square-channel kernel and scale it under the quick
    spectral product bound, so its circular operator has norm <= ~1 and the
    truncated exponential converges fast."""
    from .verify import product_bound  # deferred: verify imports construct

    S = skew_symmetrize_kernel(K)
    bound = product_bound([S])
    if bound == 0.0:
        return S
    return KernelTensor(S.data / bound)
