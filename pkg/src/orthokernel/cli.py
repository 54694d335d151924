"""Command-line front door.

Subcommands:

    build     config.json out.okt   -> construct a kernel, write okt-v1 + sidecar
    verify    kernel.okt [flags]    -> spectrum check, JSON report on stdout
    spectrum  kernel.okt [flags]    -> print descending singular values
    selftest                        -> run the verification grid
    bench                           -> fast-vs-naive fusion timings

Exit codes: 0 success / verification pass, 1 verification failure,
2 invalid input, 3 unsupported configuration.  All commands are
deterministic given their flags and seeds.  ORTHOKERNEL_THREADS optionally
caps grid parallelism (default 1).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from statistics import median

import numpy as np

from . import kernel_io
from .blockconv import block_conv_fast, block_conv_naive, scan_compose, sequential_compose
from .construct import AocConfig, aoc_kernel
from .orthogonalize import DEFAULT_BETA, DEFAULT_ITERS, DEFAULT_SCHEME, sample_params
from .tensor_core import ConvSpec, KernelTensor, UnsupportedConfigError
from .verify import DEFAULT_TOLERANCE, check_orthogonality, grid_entries, run_grid, singular_values, toeplitz_from_kernel

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_BAD_INPUT = 2
EXIT_UNSUPPORTED = 3

_CONFIG_KEYS = {"c_in", "c_out", "kernel", "stride", "groups", "dilation",
                "scheme", "iters", "beta", "seed", "ordering"}


def _load_build_config(path, overrides: dict | None = None) -> AocConfig:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key in ("c_in", "c_out", "kernel"):
        if key not in doc:
            raise ValueError(f"config is missing required key {key!r}")
    doc.update(overrides or {})  # command-line flags win over the file
    kernel = doc["kernel"]
    if isinstance(kernel, int):
        k1 = k2 = kernel
    elif isinstance(kernel, (list, tuple)) and len(kernel) == 2:
        k1, k2 = int(kernel[0]), int(kernel[1])
    else:
        raise ValueError("config key 'kernel' must be an int or a [k1, k2] pair")
    spec = ConvSpec(
        c_in=int(doc["c_in"]), c_out=int(doc["c_out"]), k_h=k1, k_w=k2,
        stride=int(doc.get("stride", 1)), groups=int(doc.get("groups", 1)),
        dilation=int(doc.get("dilation", 1)),
    )
    return AocConfig(
        spec=spec,
        scheme=str(doc.get("scheme", DEFAULT_SCHEME)),
        iters=int(doc.get("iters", DEFAULT_ITERS)),
        beta=float(doc.get("beta", DEFAULT_BETA)),
        seed=int(doc.get("seed", 0)),
        ordering=str(doc.get("ordering", "bcop")),
    )


_OVERRIDE_FLAGS = ("stride", "groups", "dilation", "scheme", "iters", "beta",
                   "seed", "ordering")


def cmd_build(args) -> int:
    try:
        overrides = {k: getattr(args, k) for k in _OVERRIDE_FLAGS
                     if getattr(args, k) is not None}
        cfg = _load_build_config(args.config, overrides)
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        K, tag = aoc_kernel(cfg)
    except UnsupportedConfigError as exc:
        print(f"unsupported configuration: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    kernel_io.write_kernel(args.out, K)
    sidecar = {
        "branch": tag.to_dict(),
        "config": {
            "c_in": cfg.spec.c_in, "c_out": cfg.spec.c_out,
            "kernel": [cfg.spec.k_h, cfg.spec.k_w],
            "stride": cfg.spec.stride, "groups": cfg.spec.groups,
            "dilation": cfg.spec.dilation, "scheme": cfg.scheme,
            "iters": cfg.iters, "beta": cfg.beta, "seed": cfg.seed,
            "ordering": cfg.ordering,
        },
    }
    with open(str(args.out) + ".meta.json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"wrote {args.out} (branch {tag.branch})")
    return EXIT_OK


def _spec_from_flags(K: KernelTensor, args) -> ConvSpec:
    return ConvSpec(
        c_in=K.c_in, c_out=K.c_out, k_h=K.k_h, k_w=K.k_w,
        stride=args.stride, groups=K.groups, dilation=args.dilation,
    )


def cmd_verify(args) -> int:
    try:
        K = kernel_io.read_kernel(args.kernel)
        spec = _spec_from_flags(K, args)
        h, w = args.size
        report = check_orthogonality(K, spec, h, w, tolerance=args.tol)
    except (OSError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    config = {"c_in": spec.c_in, "c_out": spec.c_out,
              "kernel": [spec.k_h, spec.k_w], "stride": spec.stride,
              "groups": spec.groups, "dilation": spec.dilation,
              "size": [h, w]}
    print(report.to_json(config))
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


def cmd_spectrum(args) -> int:
    try:
        K = kernel_io.read_kernel(args.kernel)
        spec = _spec_from_flags(K, args)
        h, w = args.size
        sv = singular_values(toeplitz_from_kernel(K, spec, h, w))
    except (OSError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    for v in sv:
        print(f"{v:.12f}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    workers = int(os.environ.get("ORTHOKERNEL_THREADS", "1"))
    categories = args.category if args.category else None
    t0 = time.perf_counter()
    results = run_grid(scheme=args.scheme, seed=args.seed,
                       tolerance=args.tol, categories=categories,
                       max_workers=max(1, workers))
    elapsed = time.perf_counter() - t0
    by_cat: dict[str, list[bool]] = {}
    for r in results:
        by_cat.setdefault(r["category"], []).append(bool(r["passed"]))
    all_ok = True
    for cat in sorted(by_cat):
        oks = by_cat[cat]
        ok = all(oks)
        all_ok &= ok
        print(f"{cat:<12s} {sum(oks)}/{len(oks)} passed")
    for r in results:
        if not r["passed"]:
            print(f"FAIL {r['key']}: {r}")
    print(f"total {sum(len(v) for v in by_cat.values())} configurations "
          f"in {elapsed:.1f}s: {'all passed' if all_ok else 'FAILURES'}")
    return EXIT_OK if all_ok else EXIT_VERIFY_FAIL


def _time_call(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return median(times)


def cmd_bench(args) -> int:
    if args.reps < 1:
        print("reps must be >= 1", file=sys.stderr)
        return EXIT_BAD_INPUT
    C, k, reps = args.channels, args.kernel, args.reps
    A = KernelTensor(sample_params((C, C, k, k), 1))
    B = KernelTensor(sample_params((C, C, k, k), 2))
    t_naive = _time_call(lambda: block_conv_naive(B, A), reps)
    t_fast = _time_call(lambda: block_conv_fast(B, A), reps)
    chain = [KernelTensor(sample_params((C, C, 2, 2), 10 + i)) for i in range(8)]
    t_seq = _time_call(lambda: sequential_compose(chain), max(1, reps // 2))
    t_scan = _time_call(lambda: scan_compose(chain), reps)
    print(f"block convolution fusion, C={C}, k={k}, median of {reps}:")
    print(f"  naive quadruple loop : {t_naive * 1e3:10.3f} ms")
    print(f"  fused correlation    : {t_fast * 1e3:10.3f} ms")
    print(f"chain composition, 8 factors of 2x2, C={C}:")
    print(f"  sequential fold (naive op) : {t_seq * 1e3:10.3f} ms")
    print(f"  tree scan (fused op)       : {t_scan * 1e3:10.3f} ms")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orthokernel",
                                description="orthogonal convolution kernels: "
                                            "build, verify, inspect")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build a kernel from a JSON config")
    b.add_argument("config", help="path to the build config (JSON)")
    b.add_argument("out", help="output path for the okt-v1 kernel file")
    # every config key has a flag equivalent; flags win on conflict
    b.add_argument("--stride", type=int, default=None)
    b.add_argument("--groups", type=int, default=None)
    b.add_argument("--dilation", type=int, default=None)
    b.add_argument("--scheme", default=None)
    b.add_argument("--iters", type=int, default=None)
    b.add_argument("--beta", type=float, default=None)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--ordering", default=None)
    b.set_defaults(fn=cmd_build)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--stride", type=int, default=1)
    common.add_argument("--dilation", type=int, default=1)
    common.add_argument("--size", type=int, nargs=2, default=[8, 8],
                        metavar=("H", "W"))

    v = sub.add_parser("verify", parents=[common],
                       help="check orthogonality of a kernel file")
    v.add_argument("kernel", help="path to an okt-v1 kernel file")
    v.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE)
    v.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("spectrum", parents=[common],
                        help="print the singular values of a kernel's operator")
    sp.add_argument("kernel", help="path to an okt-v1 kernel file")
    sp.set_defaults(fn=cmd_spectrum)

    st = sub.add_parser("selftest", help="run the verification grid")
    st.add_argument("--scheme", default=DEFAULT_SCHEME)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE)
    st.add_argument("--category", action="append",
                    choices=sorted({e.category for e in grid_entries()}),
                    help="restrict to a category (repeatable); default: all")
    st.set_defaults(fn=cmd_selftest)

    be = sub.add_parser("bench", help="fusion timings, fast vs naive")
    be.add_argument("--channels", type=int, default=16)
    be.add_argument("--kernel", type=int, default=3)
    be.add_argument("--reps", type=int, default=5)
    be.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
