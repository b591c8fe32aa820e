"""Adaptive quantile sparse image prior for inverse imaging problems.

The package provides guided weighted-quantile filtering, its frozen
pseudo-linear selection form, the L1 quantile-residual prior with smoothed
gradients, gradient-descent and ADMM solvers (single- and multi-channel),
degradation simulators, quality metrics, and a CLI wiring the pieces into
denoising, non-blind deblurring, and joint-upsampling pipelines.
"""

from .degrade import (
    ConvOperator,
    DecimationSpec,
    NoiseSpec,
    add_mixed_noise,
    add_noise,
    convolve,
    convolve_transpose,
    degrade_depth,
    gaussian_kernel,
    nn_downsample,
    nn_upsample,
)
from .image import GRAYSCALE_WEIGHTS, Window, as_image, as_multichannel, channel_average, window
from .io import (
    ImageIOError,
    MalformedHeaderError,
    TruncatedDataError,
    UnsupportedFormatError,
    read_image,
    read_kernel,
    read_selection,
    write_image,
    write_kernel,
    write_selection,
)
from .metrics import Histogram, bme, psnr, residual_histogram, rmse
from .quantile import (
    GUIDANCE_MODES,
    QuantileConfig,
    SelectionOperator,
    apply_filter,
    apply_selection,
    apply_selection_transpose,
    build_selection,
    guidance_weight,
    weighted_quantile,
)
from .regularizers import (
    aquasi_gradient,
    aquasi_value,
    red_gradient,
    red_value,
    shrink,
    smoothed_sign,
    tv_gradient,
    tv_value,
)
from .solvers import (
    CGBreakdownError,
    DataTerm,
    EnergyTrace,
    IdentityData,
    LinearOpData,
    MaskedData,
    SolverConfig,
    SolverDivergenceError,
    cg_solve,
    solve_admm,
    solve_gd,
    solve_multichannel,
)

__version__ = "0.1.0"
