"""Edge adaptive hybrid regularization for non-blind image deblurring."""

from .degrade import (
    DegradeSpec,
    KernelSpec,
    add_gaussian_noise,
    average_kernel,
    degrade,
    gaussian_kernel,
    motion_kernel,
    parse_kernel,
    shepp_logan,
)
from .edges import WeightConfig, binarize_weights, edge_matrix
from .image import ImageIOError, Kernel, load_image, merge_channels, save_image, split_channels
from .metrics import QualityReport, mse, psnr, quality, ssim
from .schedule import Schedule, param_schedule
from .solver import (
    DEFAULT_WEIGHTS,
    SolveResult,
    SolverConfig,
    SolverDivergence,
    auto_config,
    convergence_report,
    solve,
    solve_channel,
)

__version__ = "0.1.0"
