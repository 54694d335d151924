"""orthokernel: explicit orthogonal 2-D convolution kernels.

Construct convolution kernels whose strided circular operators are exactly
orthogonal -- with native stride, groups, dilation and transposition --
and verify them independently through impulse-response operator matrices
and singular-value analysis.
"""

from .tensor_core import (
    PADDING_CIRCULAR,
    PADDING_ZERO,
    ConvSpec,
    ImageTensor,
    DenseMatrix,
    KernelTensor,
    UnsupportedConfigError,
    conv2d_ref,
    conv2d_transpose_ref,
    identity_kernel,
    kernel_transpose,
    spec_for_kernel,
    vec,
)
from .kernel_io import read_kernel, write_kernel, kernel_to_json, kernel_from_json
from .blockconv import (
    KernelChain,
    block_conv_batched,
    block_conv_fast,
    block_conv_naive,
    compat,
    scan_compose,
    sequential_compose,
)
from .orthogonalize import (
    OrthoParams,
    ProjectorPair,
    bjorck_orthogonalize,
    cayley_rect,
    cholesky_orth,
    exp_map,
    orthogonalize,
    power_iteration_norm,
    projector_pair,
    qr_mgs,
    qr_mgs_full,
    sample_params,
)
from .construct import (
    AocConfig,
    BranchTag,
    aoc_kernel,
    bcop_kernel,
    projector_param_count,
    rko_kernel,
    scfac_kernel,
    skew_symmetrize_kernel,
    soc_explicit_kernel,
    soc_normalized_skew,
    transpose_kernel_for,
)
from .verify import (
    SpectrumReport,
    check_orthogonality,
    conv_operator_norm,
    grid_entries,
    product_bound,
    robustness_certificate,
    roundtrip_check,
    run_grid,
    singular_values,
    singular_values_gram,
    toeplitz_from_kernel,
    toeplitz_of_transpose,
)

__version__ = "0.1.0"
