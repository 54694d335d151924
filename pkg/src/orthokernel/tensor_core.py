"""Core tensor types and the reference convolution operators.

Everything downstream (kernel fusion, constructions, spectral checks) is
validated against the operators in this module, so they are written for
clarity and exactness rather than speed: the convolution is a direct
summation over kernel taps, and the transposed convolution is its exact
adjoint (scatter of the same taps).

Index convention, fixed once for the whole package
--------------------------------------------------
A kernel tap (i', j') of a (k_h, k_w) kernel sits at the spatial offset
(i' - (k_h-1)//2, j' - (k_w-1)//2), i.e. taps are centred on the kernel
midpoint (floor-centred for even sizes).  With circular padding, stride s
and dilation d the forward operator reads

    y[m, i, j] = sum_{c, i', j'} K[m, c, i', j']
                 * x[c, (i*s - (i'-oh)*d) mod h, (j*s - (j'-ow)*d) mod w]

with oh = (k_h-1)//2, ow = (k_w-1)//2.  The centred origin is what makes
the kernel-level algebra self-consistent: for odd kernel sizes, flipping a
kernel spatially and swapping its channel axes yields exactly the adjoint
operator, and a kernel satisfying K = -transpose(K) induces a
skew-symmetric operator.  Neither identity holds for any uncentred origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PADDING_CIRCULAR = "circular"
PADDING_ZERO = "zero"

#: real dense matrix; plain 2-axis float64 ndarray
DenseMatrix = np.ndarray

#: single image, indexed [channel][row][col]
ImageTensor = np.ndarray


class UnsupportedConfigError(ValueError):
    """A convolution configuration for which no orthogonal kernel exists."""


def _as_f64(a, name: str) -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


@dataclass(frozen=True)
class KernelTensor:
    """Convolution kernel, indexed [c_out][c_in_per_group][k_h][k_w].

    `groups` partitions channels into contiguous blocks: output channels
    [q*c_out/g, (q+1)*c_out/g) read input channels [q*c_in/g, (q+1)*c_in/g).
    Immutable after construction.
    """

    data: np.ndarray
    groups: int = 1

    def __post_init__(self):
        data = _as_f64(self.data, "kernel")
        if data.ndim != 4:
            raise ValueError(f"kernel must have 4 axes, got {data.ndim}")
        if min(data.shape) < 1:
            raise ValueError(f"kernel extents must be >= 1, got {data.shape}")
        if self.groups < 1:
            raise ValueError("groups must be >= 1")
        if data.shape[0] % self.groups != 0:
            raise ValueError(
                f"c_out={data.shape[0]} not divisible by groups={self.groups}"
            )
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def c_out(self) -> int:
        return self.data.shape[0]

    @property
    def c_in(self) -> int:
        return self.data.shape[1] * self.groups

    @property
    def k_h(self) -> int:
        return self.data.shape[2]

    @property
    def k_w(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class ConvSpec:
    """Contract of a convolution: channel counts, kernel size, stride,
    groups, dilation and padding mode.

    Orthogonality claims are only meaningful under circular padding; zero
    padding is accepted by the reference operators but rejected by the
    verification entry points.
    """

    c_in: int
    c_out: int
    k_h: int
    k_w: int
    stride: int = 1
    groups: int = 1
    dilation: int = 1
    padding: str = PADDING_CIRCULAR

    def __post_init__(self):
        for name in ("c_in", "c_out", "k_h", "k_w", "stride", "groups", "dilation"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.c_in % self.groups != 0 or self.c_out % self.groups != 0:
            raise ValueError(
                f"c_in={self.c_in}, c_out={self.c_out} must be divisible by "
                f"groups={self.groups}"
            )
        if self.padding not in (PADDING_CIRCULAR, PADDING_ZERO):
            raise ValueError(f"unknown padding mode {self.padding!r}")

    def matches_kernel(self, K: KernelTensor) -> bool:
        return (
            K.c_out == self.c_out
            and K.groups == self.groups
            and K.data.shape[1] == self.c_in // self.groups
            and K.k_h == self.k_h
            and K.k_w == self.k_w
        )


def spec_for_kernel(K: KernelTensor, stride: int = 1, dilation: int = 1,
                    padding: str = PADDING_CIRCULAR) -> ConvSpec:
    """ConvSpec matching a kernel's shape and group count."""
    return ConvSpec(
        c_in=K.c_in, c_out=K.c_out, k_h=K.k_h, k_w=K.k_w,
        stride=stride, groups=K.groups, dilation=dilation, padding=padding,
    )


def identity_kernel(c: int, k_h: int = 1, k_w: int = 1) -> KernelTensor:
    """Kernel acting as the identity map: delta at the centre tap, identity
    across channels.  Exact identity operator for odd extents."""
    data = np.zeros((c, c, k_h, k_w))
    data[np.arange(c), np.arange(c), (k_h - 1) // 2, (k_w - 1) // 2] = 1.0
    return KernelTensor(data)


def _check_image(x, c_expected: int, name: str = "x") -> np.ndarray:
    x = _as_f64(x, name)
    if x.ndim != 3:
        raise ValueError(f"{name} must have 3 axes [c][h][w], got {x.ndim}")
    if x.shape[0] != c_expected:
        raise ValueError(f"{name} has {x.shape[0]} channels, expected {c_expected}")
    if min(x.shape) < 1:
        raise ValueError(f"{name} extents must be >= 1")
    return x


def _check_kernel_spec(K: KernelTensor, spec: ConvSpec):
    if not isinstance(K, KernelTensor):
        raise TypeError("K must be a KernelTensor")
    if not spec.matches_kernel(K):
        raise ValueError(
            f"kernel shape {K.shape} x groups={K.groups} does not match spec "
            f"(c_in={spec.c_in}, c_out={spec.c_out}, k={spec.k_h}x{spec.k_w}, "
            f"groups={spec.groups})"
        )


def conv2d_ref(K: KernelTensor, x: ImageTensor, spec: ConvSpec) -> ImageTensor:
    """Reference 2-D convolution, direct summation over kernel taps.

    Input x is [c_in][h][w]; output is [c_out][h/s][w/s].  With circular
    padding indices wrap modulo (h, w); with zero padding out-of-range taps
    contribute nothing.  h and w must be divisible by the stride.
    """
    _check_kernel_spec(K, spec)
    x = _check_image(x, spec.c_in)
    c_in, h, w = x.shape
    s, d, g = spec.stride, spec.dilation, spec.groups
    if h % s != 0 or w % s != 0:
        raise ValueError(f"image size {h}x{w} not divisible by stride {s}")
    kh, kw = spec.k_h, spec.k_w
    oh, ow = (kh - 1) // 2, (kw - 1) // 2
    ho, wo = h // s, w // s
    xg = x.reshape(g, c_in // g, h, w)
    Kg = K.data.reshape(g, spec.c_out // g, c_in // g, kh, kw)
    y = np.zeros((g, spec.c_out // g, ho, wo))
    I = np.arange(ho) * s
    J = np.arange(wo) * s
    circular = spec.padding == PADDING_CIRCULAR
    for ip in range(kh):
        raw_r = I - (ip - oh) * d
        for jp in range(kw):
            raw_c = J - (jp - ow) * d
            if circular:
                sub = xg[:, :, (raw_r % h)[:, None], (raw_c % w)[None, :]]
            else:
                rmask = (raw_r >= 0) & (raw_r < h)
                cmask = (raw_c >= 0) & (raw_c < w)
                sub = np.zeros((g, c_in // g, ho, wo))
                sub[:, :, rmask[:, None] & cmask[None, :]] = xg[
                    :, :, raw_r[rmask][:, None], raw_c[cmask][None, :]
                ].reshape(g, c_in // g, -1)
            y += np.einsum("gmc,gcij->gmij", Kg[:, :, :, ip, jp], sub)
    return y.reshape(spec.c_out, ho, wo)


def conv2d_transpose_ref(K: KernelTensor, x: ImageTensor, spec: ConvSpec) -> ImageTensor:
    """Transposed convolution: the exact adjoint of `conv2d_ref`.

    Realizes multiplication by the transpose of the (strided) operator
    matrix: <conv2d_ref(K, z), x> == <z, conv2d_transpose_ref(K, x)> holds
    to rounding error for every spec.  Input is [c_out][h/s][w/s]; output
    is [c_in][h][w].
    """
    _check_kernel_spec(K, spec)
    x = _check_image(x, spec.c_out)
    s, d, g = spec.stride, spec.dilation, spec.groups
    ho, wo = x.shape[1], x.shape[2]
    h, w = ho * s, wo * s
    kh, kw = spec.k_h, spec.k_w
    oh, ow = (kh - 1) // 2, (kw - 1) // 2
    xg = x.reshape(g, spec.c_out // g, ho, wo)
    Kg = K.data.reshape(g, spec.c_out // g, spec.c_in // g, kh, kw)
    y = np.zeros((g, spec.c_in // g, h, w))
    I = np.arange(ho) * s
    J = np.arange(wo) * s
    circular = spec.padding == PADDING_CIRCULAR
    for ip in range(kh):
        raw_r = I - (ip - oh) * d
        for jp in range(kw):
            raw_c = J - (jp - ow) * d
            contrib = np.einsum("gmc,gmij->gcij", Kg[:, :, :, ip, jp], xg)
            if circular:
                # distinct (i, j) scatter to distinct targets within one tap,
                # so fancy += is collision-free here
                y[:, :, (raw_r % h)[:, None], (raw_c % w)[None, :]] += contrib
            else:
                rmask = (raw_r >= 0) & (raw_r < h)
                cmask = (raw_c >= 0) & (raw_c < w)
                y[:, :, raw_r[rmask][:, None], raw_c[cmask][None, :]] += contrib[
                    :, :, rmask[:, None] & cmask[None, :]
                ].reshape(g, spec.c_in // g, rmask.sum(), cmask.sum())
    return y.reshape(spec.c_in, h, w)


def kernel_transpose(K: KernelTensor) -> KernelTensor:
    """Swap channel axes and reverse both spatial axes.

    For odd kernel sizes the transposed kernel realizes exactly the adjoint
    operator under the centred circular convention; for even sizes the two
    differ by a one-pixel circular shift (singular values are unaffected).
    Grouped kernels are handled per group by the caller.
    """
    if K.groups != 1:
        raise ValueError("kernel_transpose expects groups == 1")
    return KernelTensor(K.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])


def vec(x: np.ndarray) -> np.ndarray:
    """Flatten an image [c][h][w] to the column ordering used by the dense
    operator matrices (channel-major, then rows, then columns)."""
    return np.asarray(x).ravel()
