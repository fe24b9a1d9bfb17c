"""Spatially unbounded image generation with consistent convolutional generators."""

from .core import PhaseIndex, Rect, Tensor3, max_abs_diff, subpatch
from .errors import (
    ChannelError,
    ChecksumError,
    ContainmentError,
    ContractError,
    InconsistentNetworkError,
    InfCanvasError,
    ManifestError,
    ParameterError,
    PlanningError,
    ShapeError,
    SpecError,
    UnderflowError,
    UnknownTensorError,
)
from .geometry import GeometrySummary, backward_rect, forward_rect, min_input_size, min_latent_overlap, summarize
from .latent import LatentField, materialize, sample_at
from .layers import (
    AdaPixNormParams,
    LayerKind,
    LayerSpec,
    activation,
    bilinear_up_crop,
    conv_no_pad,
    conv_zero_pad,
    nearest_up,
    noisy_ada_pix_norm,
    pixel_norm,
)
from .netspec import MultiScaleSpec, NetworkSpec, load_spec, save_spec
from .network import (
    ForwardResult,
    crop_stitch_net,
    forward,
    forward_multiscale,
    generate,
    reference_g0,
    reference_multiscale,
    reference_upscaler,
)
from .tiling import StitchReport, Tile, TilingPlan, generate_tiled, plan
from .weights import WeightStore, init_random, load, save

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
