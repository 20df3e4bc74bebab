"""Free-breathing multi-shot MRI simulation and motion-compensated reconstruction.

The package covers the full loop: hybrid Cartesian sampling with a golden-step
periphery, a numerical phantom with breathing-like deformation, self-navigation
from repeated center lines, respiratory binning, per-bin regularized SENSE,
non-rigid inter-bin registration, and a joint motion-compensated
reconstruction, plus reference methods and image-quality metrics.
"""

from .core import (
    AcquisitionConfig,
    CoilMaps,
    DisplacementField,
    KSpaceData,
    ReconParams,
    SamplingMask,
    ShapeMismatchError,
    as_image,
    inner_product,
    validate_config,
)
from .fileio import (
    DataFormatError,
    DimensionMismatchError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    export_png,
    export_signal_png,
    read_dataset,
    write_dataset,
)
from .metrics import ProfileSpec, line_profile, psnr, signal_correlation, ssim
from .operators import (
    EncodingOperator,
    div,
    encode,
    encode_adjoint,
    estimate_norm,
    fft2c,
    grad,
    ifft2c,
    warp,
    warp_adjoint,
)
from .pipeline import (
    MotionSettings,
    PipelineConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    preset_config,
    run_pipeline,
    stage_seed,
)
from .recon import (
    SolveReport,
    SolverDivergenceError,
    baseline_rra,
    baseline_sos,
    beltrami_energy,
    beltrami_gradient,
    solve_bsense,
    solve_mocobel,
    solve_tikhonov,
)
from .registration import RegistrationParams, register, register_bins
from .sampling import (
    GOLDEN_FRACTION,
    TrajectoryPlan,
    build_trajectory,
    center_block_lines,
    golden_step_lines,
    hybrid_mask,
    mask_union,
)
from .selfnav import (
    BinAssignment,
    RespiratorySignal,
    bin_shots,
    extract_signal,
    navigator_images,
)
from .simulator import (
    Ellipse,
    LineFeature,
    PhantomSpec,
    ShotMotion,
    acquire,
    apply_motion,
    breathing_trace,
    default_phantom_spec,
    make_coil_maps,
    make_phantom,
    motion_field,
    simulate_acquisition,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionConfig",
    "BinAssignment",
    "CoilMaps",
    "DataFormatError",
    "DimensionMismatchError",
    "DisplacementField",
    "Ellipse",
    "EncodingOperator",
    "GOLDEN_FRACTION",
    "KSpaceData",
    "LineFeature",
    "MotionSettings",
    "PhantomSpec",
    "PipelineConfig",
    "ProfileSpec",
    "ReconParams",
    "RegistrationParams",
    "RespiratorySignal",
    "SamplingMask",
    "ShapeMismatchError",
    "ShotMotion",
    "SolveReport",
    "SolverDivergenceError",
    "TrajectoryPlan",
    "TruncatedPayloadError",
    "UnsupportedVersionError",
    "acquire",
    "apply_motion",
    "as_image",
    "baseline_rra",
    "baseline_sos",
    "beltrami_energy",
    "beltrami_gradient",
    "bin_shots",
    "breathing_trace",
    "build_trajectory",
    "center_block_lines",
    "config_from_dict",
    "config_to_dict",
    "default_phantom_spec",
    "div",
    "encode",
    "encode_adjoint",
    "estimate_norm",
    "export_png",
    "export_signal_png",
    "extract_signal",
    "fft2c",
    "golden_step_lines",
    "grad",
    "hybrid_mask",
    "ifft2c",
    "inner_product",
    "line_profile",
    "load_config",
    "make_coil_maps",
    "make_phantom",
    "mask_union",
    "motion_field",
    "navigator_images",
    "preset_config",
    "psnr",
    "read_dataset",
    "register",
    "register_bins",
    "run_pipeline",
    "signal_correlation",
    "simulate_acquisition",
    "solve_bsense",
    "solve_mocobel",
    "solve_tikhonov",
    "ssim",
    "stage_seed",
    "validate_config",
    "warp",
    "warp_adjoint",
    "write_dataset",
]
