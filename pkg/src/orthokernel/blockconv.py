"""Block convolution: fusing two convolution kernels into one.

`block_conv(B, A)` produces the single kernel whose convolution equals
applying A first and B second.  Entrywise,

    (B . A)[m, n, i, j] = sum_{c, i', j'} B[m, c, i', j'] * A[c, n, i-i', j-j']

with A treated as zero outside its support; the result has spatial size
(k1A + k1B - 1, k2A + k2B - 1).  `block_conv_naive` is the literal loop and
serves as the oracle; `block_conv_fast` computes the same contraction as a
single zero-padded cross-correlation (swap the channel axes of the first
operand, flip the second spatially, correlate with full padding, swap
back), vectorized over groups so that batches of independent fusions run
in one call.

Under the centred tap convention, applying the fused kernel matches the
two-step application exactly whenever at most one of the two sizes is even
per axis; an even-by-even fusion differs by a one-pixel circular shift
(which leaves singular values and orthogonality untouched).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor_core import KernelTensor

#: ordered sequence of kernels, first element applied first
KernelChain = Sequence[KernelTensor]


def compat(A: KernelTensor, B: KernelTensor) -> bool:
    """True if B can be applied after A (input channels of B match output
    channels of A)."""
    return B.c_in == A.c_out


def _require_compat(A: KernelTensor, B: KernelTensor):
    if not compat(A, B):
        raise ValueError(
            f"incompatible kernels: B expects {B.c_in} input channels, "
            f"A produces {A.c_out}"
        )


def block_conv_naive(B: KernelTensor, A: KernelTensor) -> KernelTensor:
    """Literal quadruple loop over output entries; the fast path's oracle."""
    if A.groups != 1 or B.groups != 1:
        raise ValueError("block_conv_naive expects ungrouped kernels")
    _require_compat(A, B)
    Ad, Bd = A.data, B.data
    cm, ci, k1, k2 = Ad.shape
    co, _, l1, l2 = Bd.shape
    K1, K2 = k1 + l1 - 1, k2 + l2 - 1
    out = np.zeros((co, ci, K1, K2))
    for m in range(co):
        for n in range(ci):
            for i in range(K1):
                for j in range(K2):
                    acc = 0.0
                    for ip in range(max(0, i - k1 + 1), min(l1, i + 1)):
                        for jp in range(max(0, j - k2 + 1), min(l2, j + 1)):
                            acc += Bd[m, :, ip, jp] @ Ad[:, n, i - ip, j - jp]
                    out[m, n, i, j] = acc
    return KernelTensor(out)


def block_conv_fast(B: KernelTensor, A: KernelTensor, groups: int = 1) -> KernelTensor:
    """Fused-kernel computation as one grouped cross-correlation.

    With groups=g, A stacks g kernels along its output-channel axis and B
    stacks g kernels along its output-channel axis; fusion is performed
    independently per group in a single contraction.
    """
    Ad, Bd = A.data, B.data
    cm, ci, k1, k2 = Ad.shape
    co, cm_pg, l1, l2 = Bd.shape
    if cm != cm_pg * groups or co % groups != 0:
        raise ValueError(
            f"incompatible kernels for groups={groups}: A produces {cm} "
            f"channels, B expects {cm_pg} per group"
        )
    Bg = Bd.reshape(groups, co // groups, cm_pg, l1, l2)[:, :, :, ::-1, ::-1]
    Ag = Ad.reshape(groups, cm_pg, ci, k1, k2)
    Ap = np.pad(Ag, [(0, 0), (0, 0), (0, 0), (l1 - 1, l1 - 1), (l2 - 1, l2 - 1)])
    win = sliding_window_view(Ap, (l1, l2), axis=(-2, -1))
    out = np.einsum("gomuv,gmnIJuv->gonIJ", Bg, win)
    return KernelTensor(out.reshape(co, ci, k1 + l1 - 1, k2 + l2 - 1))


def block_conv_batched(Bs: Sequence[KernelTensor],
                       As: Sequence[KernelTensor]) -> list[KernelTensor]:
    """Elementwise fusion of two equal-length kernel sequences, computed in
    one grouped call.  All As must share a shape, likewise all Bs."""
    if len(Bs) == 0 or len(As) == 0:
        raise ValueError("batched block convolution of empty sequences")
    if len(Bs) != len(As):
        raise ValueError(f"length mismatch: {len(Bs)} vs {len(As)}")
    a_shape = As[0].shape
    b_shape = Bs[0].shape
    if any(A.shape != a_shape for A in As) or any(B.shape != b_shape for B in Bs):
        raise ValueError("all kernels in a batch must share shapes")
    for A, B in zip(As, Bs):
        _require_compat(A, B)
    g = len(As)
    A_cat = KernelTensor(np.concatenate([A.data for A in As], axis=0))
    B_cat = KernelTensor(np.concatenate([B.data for B in Bs], axis=0))
    fused = block_conv_fast(B_cat, A_cat, groups=g)
    co = b_shape[0]
    return [KernelTensor(fused.data[q * co:(q + 1) * co]) for q in range(g)]


def sequential_compose(chain: KernelChain) -> KernelTensor:
    """Left fold chain[n-1] . ... . chain[0] using the naive operator.
    Oracle for `scan_compose`."""
    if len(chain) == 0:
        raise ValueError("cannot compose an empty chain")
    K = chain[0]
    for F in chain[1:]:
        _require_compat(K, F)
        K = block_conv_naive(F, K)
    return K


def scan_compose(chain: KernelChain) -> KernelTensor:
    """Tree-reduction composition of a kernel chain (first element applied
    first).  Associativity makes any bracketing equivalent; adjacent pairs
    are fused each round and an odd tail is carried forward unchanged, so
    the result is reproducible and reached in ceil(log2 n) rounds.  Pairs
    of identical shape within a round are fused in one batched call.
    """
    if len(chain) == 0:
        raise ValueError("cannot compose an empty chain")
    for earlier, later in zip(chain, chain[1:]):
        _require_compat(earlier, later)
    level = list(chain)
    while len(level) > 1:
        firsts = level[0::2]
        seconds = level[1::2]
        carry = [firsts.pop()] if len(firsts) > len(seconds) else []
        shapes = {(A.shape, B.shape) for A, B in zip(firsts, seconds)}
        if len(shapes) == 1 and len(firsts) > 1:
            level = block_conv_batched(seconds, firsts) + carry
        else:
            level = [block_conv_fast(B, A) for A, B in zip(firsts, seconds)] + carry
    return level[0]
