"""patchpath: image restoration by reordering patches along short paths.

All overlapping patches of a corrupted image are chained into an approximate
shortest path through patch space; the induced pixel permutation turns the
image into signals that are regular enough for simple 1D operators (learned
filters, cubic gap interpolation). Averaging over all subimage offsets and
several random orderings yields the restored image.
"""

from .corruption import CorruptionSpec, corrupt, psnr
from .denoising import (
    DenoiseIterationParams,
    FilterBank,
    classify_patches,
    default_schedule,
    denoise,
    filter_signal,
    load_bank,
    save_bank,
    split_orderings,
    train_filter_banks,
)
from .harness import (
    ReportRow,
    nominal_op_count,
    read_report_csv,
    run_experiments,
    spatial_distance_histogram,
    synthetic_texture,
    write_report_csv,
)
from .inpainting import InpaintIterationParams, InsufficientDataError, cubic_fill, inpaint
from .io import FormatError, load_float_grid, load_image, load_mask, save_float_grid, save_image, save_mask
from .ordering import (
    EUCLIDEAN,
    MASKED,
    NoOverlapError,
    Ordering,
    SolverParams,
    build_ordering,
    load_ordering,
    patch_distance,
    permute,
    recompute_path_cost,
    save_ordering,
    unpermute,
)
from .patches import (
    PatchSet,
    accumulate_subimage,
    coverage_weights,
    extract_patches,
    extract_subimage,
    offset_to_shift,
)
from .pipeline import (
    IdentityOperator,
    OrderingPlan,
    PipelineConfig,
    PlanGroup,
    build_plans,
    restore,
    restore_iterated,
    run_plans,
)

__version__ = "0.1.0"
