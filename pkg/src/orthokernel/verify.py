"""Independent orthogonality verification.

The centrepiece is the impulse-response construction of the dense operator
matrix: column (c, i, j) of `toeplitz_from_kernel` is the flattened output
of the reference convolution applied to the unit impulse e_{c,i,j}, so the
matrix exactly represents the strided circular operator, groups and
dilation included, no matter what convention the reference uses.  Singular
values of that matrix decide orthogonality; a convolution passes when its
whole spectrum lies within `tolerance` of 1 (default 1e-4).

The grid at the bottom mirrors a unit-test bank over convolution
configurations: common CNN shapes, extended strided ones, even kernel
sizes, depthwise with k = s, kernel-size-equals-stride, grouped, dilated,
and transposed operators, all exercised on small images where the kernel
size is not negligible against the image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .construct import AocConfig, BranchTag, aoc_kernel
from .tensor_core import (
    PADDING_CIRCULAR,
    ConvSpec,
    KernelTensor,
    conv2d_ref,
    conv2d_transpose_ref,
    spec_for_kernel,
)

ENTRY_BUDGET = 1 << 24
DEFAULT_TOLERANCE = 1e-4


@dataclass(frozen=True)
class SpectrumReport:
    """Singular-value extremes and verdict of one orthogonality check."""

    sigma_max: float
    sigma_min: float
    residual_inf: float
    n_rows: int
    n_cols: int
    passed: bool
    tolerance: float

    def to_dict(self, config: dict | None = None) -> dict:
        doc = {
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "residual_inf": self.residual_inf,
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "pass": self.passed,
            "tolerance": self.tolerance,
        }
        if config is not None:
            doc["config"] = config
        return doc

    def to_json(self, config: dict | None = None) -> str:
        return json.dumps(self.to_dict(config), sort_keys=True)


def toeplitz_from_kernel(K: KernelTensor, spec: ConvSpec, h: int, w: int) -> np.ndarray:
    """Dense matrix of the strided circular convolution, built column by
    column from impulse responses.

    Shape is (c_out*h*w/s^2) x (c_in*h*w); rows/columns are ordered
    channel-major.  Guarded by an entry-count budget (this is a desk-scale
    tool, intended for small images such as 8x8).
    """
    if spec.padding != PADDING_CIRCULAR:
        raise ValueError("operator-matrix construction assumes circular padding")
    s = spec.stride
    if h % s != 0 or w % s != 0:
        raise ValueError(f"image size {h}x{w} not divisible by stride {s}")
    n_rows = spec.c_out * (h // s) * (w // s)
    n_cols = spec.c_in * h * w
    if n_rows * n_cols > ENTRY_BUDGET:
        raise ValueError(
            f"operator matrix {n_rows}x{n_cols} exceeds the entry budget "
            f"({ENTRY_BUDGET}); use a smaller image or fewer channels"
        )
    T = np.empty((n_rows, n_cols))
    e = np.zeros((spec.c_in, h, w))
    col = 0
    for c in range(spec.c_in):
        for a in range(h):
            for b in range(w):
                e[c, a, b] = 1.0
                T[:, col] = conv2d_ref(K, e, spec).ravel()
                e[c, a, b] = 0.0
                col += 1
    return T


def toeplitz_of_transpose(K: KernelTensor, spec: ConvSpec, h: int, w: int) -> np.ndarray:
    """Dense matrix of the transposed operator, built independently from
    impulse responses of `conv2d_transpose_ref` (not by transposing the
    forward matrix)."""
    if spec.padding != PADDING_CIRCULAR:
        raise ValueError("operator-matrix construction assumes circular padding")
    s = spec.stride
    if h % s != 0 or w % s != 0:
        raise ValueError(f"image size {h}x{w} not divisible by stride {s}")
    ho, wo = h // s, w // s
    n_rows = spec.c_in * h * w
    n_cols = spec.c_out * ho * wo
    if n_rows * n_cols > ENTRY_BUDGET:
        raise ValueError("operator matrix exceeds the entry budget")
    T = np.empty((n_rows, n_cols))
    e = np.zeros((spec.c_out, ho, wo))
    col = 0
    for c in range(spec.c_out):
        for a in range(ho):
            for b in range(wo):
                e[c, a, b] = 1.0
                T[:, col] = conv2d_transpose_ref(K, e, spec).ravel()
                e[c, a, b] = 0.0
                col += 1
    return T


def singular_values(Mx: np.ndarray) -> np.ndarray:
    """Full singular spectrum, descending."""
    Mx = np.asarray(Mx, dtype=np.float64)
    if Mx.ndim != 2:
        raise ValueError("expected a matrix")
    if min(Mx.shape) > 2048:
        raise ValueError("matrix exceeds the 2048 spectrum budget")
    if not np.all(np.isfinite(Mx)):
        raise ValueError("matrix contains non-finite entries")
    return np.linalg.svd(Mx, compute_uv=False)


def singular_values_gram(Mx: np.ndarray) -> np.ndarray:
    """Independent spectrum route: square roots of the eigenvalues of the
    smaller Gram matrix.  Used to cross-check `singular_values`."""
    Mx = np.asarray(Mx, dtype=np.float64)
    G = Mx @ Mx.T if Mx.shape[0] <= Mx.shape[1] else Mx.T @ Mx
    eig = np.linalg.eigvalsh(G)
    return np.sqrt(np.clip(eig, 0.0, None))[::-1]


def check_orthogonality(K: KernelTensor, spec: ConvSpec, h: int = 8, w: int = 8,
                        tolerance: float = DEFAULT_TOLERANCE) -> SpectrumReport:
    """Build the strided operator matrix, take its spectrum, and report.

    Passes iff every singular value lies within `tolerance` of 1.  The
    residual is ||G - I||_inf on the smaller Gram side.
    """
    T = toeplitz_from_kernel(K, spec, h, w)
    sv = singular_values(T)
    G = T @ T.T if T.shape[0] <= T.shape[1] else T.T @ T
    residual = float(np.max(np.abs(G - np.eye(G.shape[0]))))
    smax, smin = float(sv[0]), float(sv[-1])
    passed = max(abs(smax - 1.0), abs(smin - 1.0)) <= tolerance
    return SpectrumReport(
        sigma_max=smax, sigma_min=smin, residual_inf=residual,
        n_rows=T.shape[0], n_cols=T.shape[1], passed=passed, tolerance=tolerance,
    )


def roundtrip_check(K: KernelTensor, spec: ConvSpec, h: int = 8, w: int = 8,
                    n_trials: int = 5, direction: str = "row", seed: int = 0) -> float:
    """Max over trials of the identity-composition error.

    direction "row": conv(K, convT(K, x)) vs x for x in output space
    (valid when the strided operator is row orthogonal).
    direction "column": convT(K, conv(K, x)) vs x for x in input space.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for _ in range(n_trials):
        if direction == "row":
            x = rng.standard_normal((spec.c_out, h // spec.stride, w // spec.stride))
            back = conv2d_ref(K, conv2d_transpose_ref(K, x, spec), spec)
        elif direction == "column":
            x = rng.standard_normal((spec.c_in, h, w))
            back = conv2d_transpose_ref(K, conv2d_ref(K, x, spec), spec)
        else:
            raise ValueError(f"unknown direction {direction!r}")
        worst = max(worst, float(np.max(np.abs(back - x))))
    return worst


def conv_operator_norm(K: KernelTensor, spec: ConvSpec, h: int = 8, w: int = 8,
                       iters: int = 100, tol: float = 1e-9) -> float:
    """Spectral norm of the strided circular operator at the given image
    size, by power iteration with the exact adjoint (matrix-free)."""
    rng = np.random.Generator(np.random.PCG64(12345))
    x = rng.standard_normal((spec.c_in, h, w))
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        y = conv2d_ref(K, x, spec)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = conv2d_transpose_ref(K, y, spec)
        nx = np.linalg.norm(x)
        x /= nx
        sigma_next = np.linalg.norm(conv2d_ref(K, x, spec))
        if abs(sigma_next - sigma) <= tol * max(sigma_next, 1.0):
            return float(sigma_next)
        sigma = sigma_next
    return float(sigma)


def product_bound(factors: Sequence[KernelTensor], h: int = 8, w: int = 8) -> float:
    """Fast upper bound for the spectral norm of a fused chain: the product
    of per-factor spectral-norm estimates at desk scale.  Tight for chains
    of orthogonal factors, loose otherwise."""
    if len(factors) == 0:
        raise ValueError("product bound of an empty chain")
    bound = 1.0
    for K in factors:
        bound *= conv_operator_norm(K, spec_for_kernel(K), h, w)
    return bound


def robustness_certificate(logits: Sequence[float], label: int) -> float:
    """Lower bound on the L2 robustness radius of a 1-Lipschitz classifier
    at one sample: (logit margin over the runner-up) / sqrt(2).  Negative
    when the sample is misclassified."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size < 2:
        raise ValueError("need at least two logits")
    if not 0 <= label < logits.size:
        raise ValueError(f"label {label} out of range")
    others = np.delete(logits, label)
    return float((logits[label] - np.max(others)) / np.sqrt(2.0))


# ---------------------------------------------------------------------------
# verification grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridEntry:
    """One configuration of the self-test bank."""

    category: str
    c_in: int
    c_out: int
    kernel: int
    stride: int = 1
    groups: int = 1
    dilation: int = 1
    check: str = "spectrum"  # "spectrum" or "roundtrip"

    def key(self) -> str:
        return (f"{self.category}/ci{self.c_in}-co{self.c_out}-k{self.kernel}"
                f"-s{self.stride}-g{self.groups}-d{self.dilation}-{self.check}")

    def image_size(self) -> int:
        # images must be divisible by the stride; 12 covers stride 3
        return 8 if 8 % self.stride == 0 else 12

    def to_config(self, scheme: str = "bjorck", seed: int = 0) -> AocConfig:
        spec = ConvSpec(c_in=self.c_in, c_out=self.c_out, k_h=self.kernel,
                        k_w=self.kernel, stride=self.stride, groups=self.groups,
                        dilation=self.dilation)
        return AocConfig(spec=spec, scheme=scheme, seed=seed)


def grid_entries() -> list[GridEntry]:
    """The full verification bank (>= 60 spectrum-checked configurations in
    >= 5 categories, plus transposed-operator checks)."""
    E = GridEntry
    entries = [
        # common CNN shapes, stride 1
        E("common", 1, 1, 1), E("common", 2, 2, 1), E("common", 16, 8, 1),
        E("common", 3, 16, 3), E("common", 16, 16, 3), E("common", 8, 4, 3),
        E("common", 4, 8, 3), E("common", 5, 7, 3), E("common", 7, 5, 3),
        E("common", 2, 4, 3), E("common", 4, 8, 5), E("common", 8, 3, 5),
        E("common", 1, 8, 3), E("common", 8, 1, 3), E("common", 6, 6, 5),
        # extended strided
        E("strided", 4, 8, 3, 2), E("strided", 8, 4, 3, 2), E("strided", 2, 8, 3, 2),
        E("strided", 8, 2, 3, 2), E("strided", 4, 16, 5, 2), E("strided", 16, 4, 5, 2),
        E("strided", 3, 12, 3, 2), E("strided", 6, 6, 3, 2), E("strided", 1, 8, 3, 2),
        E("strided", 4, 1, 3, 2), E("strided", 2, 12, 3, 2), E("strided", 5, 10, 3, 2),
        E("strided", 2, 9, 5, 3), E("strided", 4, 4, 5, 3), E("strided", 9, 2, 5, 3),
        E("strided", 2, 18, 5, 3),
        # even kernel sizes
        E("even_kernel", 4, 6, 2), E("even_kernel", 6, 4, 2), E("even_kernel", 3, 3, 2),
        E("even_kernel", 4, 4, 2), E("even_kernel", 2, 8, 2), E("even_kernel", 8, 8, 2),
        # depthwise, k = s
        E("depthwise", 2, 2, 2, 2, 2), E("depthwise", 4, 4, 2, 2, 4),
        E("depthwise", 4, 4, 3, 3, 4),
        # kernel size = stride
        E("k_equals_s", 2, 8, 2, 2), E("k_equals_s", 3, 12, 2, 2),
        E("k_equals_s", 4, 4, 2, 2), E("k_equals_s", 8, 8, 2, 2),
        E("k_equals_s", 1, 1, 2, 2), E("k_equals_s", 1, 9, 3, 3),
        E("k_equals_s", 2, 18, 3, 3), E("k_equals_s", 2, 2, 3, 3),
        E("k_equals_s", 6, 16, 2, 2),
        # grouped
        E("grouped", 8, 4, 3, 2, 2), E("grouped", 8, 8, 3, 1, 4),
        E("grouped", 4, 8, 2, 2, 2), E("grouped", 8, 16, 3, 1, 2),
        E("grouped", 16, 8, 3, 2, 4), E("grouped", 4, 4, 3, 1, 2),
        E("grouped", 12, 6, 3, 1, 2), E("grouped", 6, 12, 2, 2, 2),
        # dilated
        E("dilated", 4, 4, 3, 1, 1, 2), E("dilated", 8, 4, 3, 1, 1, 2),
        E("dilated", 2, 6, 5, 1, 1, 2), E("dilated", 4, 8, 2, 1, 1, 2),
        E("dilated", 4, 2, 5, 3, 1, 2), E("dilated", 2, 8, 3, 3, 1, 2),
        E("dilated", 8, 8, 3, 1, 4, 2),
        # transposed operators (roundtrip + independent transpose matrix)
        E("transposed", 4, 8, 3, 2, check="roundtrip"),
        E("transposed", 8, 4, 3, 2, check="roundtrip"),
        E("transposed", 2, 8, 2, 2, check="roundtrip"),
        E("transposed", 4, 4, 3, 1, check="roundtrip"),
        E("transposed", 6, 2, 3, 1, check="roundtrip"),
        E("transposed", 4, 8, 3, 2, groups=2, check="roundtrip"),
    ]
    return entries


def run_grid_entry(entry: GridEntry, scheme: str = "bjorck", seed: int = 0,
                   tolerance: float = DEFAULT_TOLERANCE) -> dict:
    """Build the kernel for one grid entry and run its check."""
    cfg = entry.to_config(scheme=scheme, seed=seed)
    K, tag = aoc_kernel(cfg)
    hw = entry.image_size()
    result = {"key": entry.key(), "category": entry.category, "branch": tag.branch}
    if entry.check == "spectrum":
        report = check_orthogonality(K, cfg.spec, hw, hw, tolerance=tolerance)
        result["passed"] = report.passed
        result["sigma_min"] = report.sigma_min
        result["sigma_max"] = report.sigma_max
    else:
        s = cfg.spec.stride
        row_orth = cfg.spec.c_out <= cfg.spec.c_in * s * s
        direction = "row" if row_orth else "column"
        err = roundtrip_check(K, cfg.spec, hw, hw, n_trials=3, direction=direction)
        # independent construction of the transpose operator matrix
        T = toeplitz_from_kernel(K, cfg.spec, hw, hw)
        Tt = toeplitz_of_transpose(K, cfg.spec, hw, hw)
        adjoint_err = float(np.max(np.abs(Tt - T.T)))
        sv = singular_values(Tt)
        spectral_ok = max(abs(sv[0] - 1.0), abs(sv[-1] - 1.0)) <= tolerance
        result["passed"] = bool(err <= 1e-8 and adjoint_err <= 1e-12 and spectral_ok)
        result["roundtrip_err"] = err
        result["adjoint_err"] = adjoint_err
    return result


def run_grid(scheme: str = "bjorck", seed: int = 0,
             tolerance: float = DEFAULT_TOLERANCE,
             categories: Sequence[str] | None = None,
             max_workers: int = 1) -> list[dict]:
    """Run the whole bank (optionally restricted to some categories);
    results come back sorted by configuration key regardless of worker
    count."""
    entries = [e for e in grid_entries()
               if categories is None or e.category in categories]
    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(
                lambda e: run_grid_entry(e, scheme=scheme, seed=seed, tolerance=tolerance),
                entries,
            ))
    else:
        results = [run_grid_entry(e, scheme=scheme, seed=seed, tolerance=tolerance)
                   for e in entries]
    return sorted(results, key=lambda r: r["key"])
