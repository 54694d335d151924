#!/usr/bin/env python3
"""Timing sweep for kernel fusion: naive quadruple loop vs the single
grouped correlation, and sequential vs tree-scan chain composition.

    python scripts/bench_fusion.py [--reps 5] [--channels 4 8 16 32]
"""

import argparse
import time
from statistics import median

from orthokernel import (
    KernelTensor,
    block_conv_fast,
    block_conv_naive,
    sample_params,
    scan_compose,
    sequential_compose,
)


def timed(fn, reps):
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return median(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--kernel", type=int, default=3)
    ap.add_argument("--channels", type=int, nargs="+", default=[4, 8, 16, 32])
    args = ap.parse_args()

    k = args.kernel
    print(f"fusion of two CxCx{k}x{k} kernels, median of {args.reps} runs")
    print(f"{'C':>4} {'naive (ms)':>12} {'fused (ms)':>12} {'speedup':>9}")
    for C in args.channels:
        A = KernelTensor(sample_params((C, C, k, k), 1))
        B = KernelTensor(sample_params((C, C, k, k), 2))
        t_naive = timed(lambda: block_conv_naive(B, A), args.reps)
        t_fast = timed(lambda: block_conv_fast(B, A), args.reps)
        print(f"{C:>4} {t_naive * 1e3:>12.2f} {t_fast * 1e3:>12.3f} "
              f"{t_naive / max(t_fast, 1e-12):>8.0f}x")

    print("\nchain composition, 8 factors of Cx Cx2x2")
    print(f"{'C':>4} {'sequential naive (ms)':>22} {'tree scan (ms)':>15}")
    for C in args.channels:
        chain = [KernelTensor(sample_params((C, C, 2, 2), 10 + i)) for i in range(8)]
        t_seq = timed(lambda: sequential_compose(chain), max(1, args.reps // 2))
        t_scan = timed(lambda: scan_compose(chain), args.reps)
        print(f"{C:>4} {t_seq * 1e3:>22.2f} {t_scan * 1e3:>15.3f}")


if __name__ == "__main__":
    main()
