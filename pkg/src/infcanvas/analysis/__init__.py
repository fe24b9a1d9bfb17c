"""Verification instruments: redundancy arithmetic, taint tracing, statistics and consistency trials."""

from .consistency import ConsistencyReport, verify_consistency, with_zero_padding
from .redundancy import (
    crop_target_side,
    finite_discard_fraction,
    patch_latent_side,
    redundancy_fraction,
    redundancy_fraction_exact,
    redundancy_table,
)
from .stationarity import StationarityReport, test_cyclostationarity
from .taint import OverlapWitness, TaintTensor, overlap_witness, trace_taint, verify_backward_rect

__all__ = [
    "ConsistencyReport",
    "OverlapWitness",
    "StationarityReport",
    "TaintTensor",
    "crop_target_side",
    "finite_discard_fraction",
    "overlap_witness",
    "patch_latent_side",
    "redundancy_fraction",
    "redundancy_fraction_exact",
    "redundancy_table",
    "test_cyclostationarity",
    "trace_taint",
    "verify_backward_rect",
    "verify_consistency",
    "with_zero_padding",
]
