"""Radiometric thermal imaging toolkit.

Physics of thermal emission and its affine small-signal approximation,
per-pixel polynomial calibration of microbolometer response against
object and ambient temperature, simulation of handheld/airborne bursts
(sub-pixel motion, fixed-pattern noise, shot noise), kernel-based
multi-frame fusion back to temperature maps, and image-quality metrics.

The estimation path (warp, per-frame kernels, polynomial offset block)
and the simulation path (forward radiometric model) are kept separate so
each can serve as a check on the other.
"""

__version__ = "0.1.0"

from .radiometry import (
    CODATA,
    KELVIN_OFFSET,
    AffineCoefficients,
    Emission,
    PhysicalConstants,
    affine_expand,
    band_power,
    gray_level,
    incident_power,
    integrate_spectral_density,
    planck_spectral_density,
)
from .calibration import (
    CalibrationError,
    CoefficientTensor,
    MeasurementSet,
    RadialModel,
    design_row,
    fit_per_pixel,
    fit_radial,
    flag_outliers,
    gain_offset_at,
    load_coefficients,
    load_measurements,
    load_radial_model,
    radial_map,
    reconstruct_coeffs,
    save_coefficients,
    save_measurements,
    save_radial_model,
    synthesize_frame,
)
from .burst import (
    Burst,
    BurstSpec,
    ConfigurationError,
    Homography,
    Perturbation,
    add_noise,
    denormalize_temperature,
    flight_geometry,
    generate_fpn,
    load_burst,
    make_burst,
    normalize_frame,
    normalize_temperature,
    overlap,
    perturb,
    sample_path,
    save_burst,
    warp,
)
from .fusion import (
    GainOffsetMaps,
    KernelStack,
    OffsetModel,
    apply_kernels,
    fit_offset,
    fuse,
    kernel_provider,
    load_kernel_stack,
    load_offset_model,
    masked_frame_means,
    naive_estimate,
    offset_eval,
    offset_sample,
    residual_shifts,
    save_kernel_stack,
    save_offset_model,
)
from .metrics import (
    ErrorReport,
    LossWeights,
    error_report,
    loss,
    mae,
    save_error_report,
    sobel_magnitude,
    ssim,
)
from .formats import (
    FormatError,
    read_float_map,
    read_json,
    read_mask_pgm,
    read_pgm,
    sidecar_path,
    write_float_map,
    write_json,
    write_mask_pgm,
    write_pgm,
)

__all__ = [
    "__version__",
    # radiometry
    "CODATA", "KELVIN_OFFSET", "AffineCoefficients", "Emission",
    "PhysicalConstants", "affine_expand", "band_power", "gray_level",
    "incident_power", "integrate_spectral_density", "planck_spectral_density",
    # calibration
    "CalibrationError", "CoefficientTensor", "MeasurementSet", "RadialModel",
    "design_row", "fit_per_pixel", "fit_radial", "flag_outliers",
    "gain_offset_at", "load_coefficients", "load_measurements",
    "load_radial_model", "radial_map", "reconstruct_coeffs",
    "save_coefficients", "save_measurements", "save_radial_model",
    "synthesize_frame",
    # burst
    "Burst", "BurstSpec", "ConfigurationError", "Homography", "Perturbation",
    "add_noise", "denormalize_temperature", "flight_geometry", "generate_fpn",
    "load_burst", "make_burst", "normalize_frame", "normalize_temperature",
    "overlap", "perturb", "sample_path", "save_burst", "warp",
    # fusion
    "GainOffsetMaps", "KernelStack", "OffsetModel", "apply_kernels",
    "fit_offset", "fuse", "kernel_provider", "load_kernel_stack",
    "load_offset_model", "masked_frame_means", "naive_estimate",
    "offset_eval", "offset_sample", "residual_shifts", "save_kernel_stack",
    "save_offset_model",
    # metrics
    "ErrorReport", "LossWeights", "error_report", "loss", "mae",
    "save_error_report", "sobel_magnitude", "ssim",
    # formats
    "FormatError", "read_float_map", "read_json", "read_mask_pgm", "read_pgm",
    "sidecar_path", "write_float_map", "write_json", "write_mask_pgm",
    "write_pgm",
]
