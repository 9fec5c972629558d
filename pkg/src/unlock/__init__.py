"""Source-free amodal panoptic adaptation tooling: omni pseudo-labels with
class-wise self-tuning thresholds, amodal object-pool mixing, output
fusion and the amodal panoptic metric suite, all network-free."""

from .core import ClassTable, area, mask_and, mask_diff, mask_or, rle_decode, rle_encode
from .config import PipelineConfig
from .errors import (
    BranchMismatch, ConfigInvalid, DimensionMismatch, EmptyDatasetWarning, FormatError, SumMismatch, UnlockError,
)
from .opll import CsThresholds, ImagePredictions, InstancePrediction, OmniPseudoLabel

__version__ = "0.1.0"

__all__ = [
    "BranchMismatch", "ClassTable", "ConfigInvalid", "CsThresholds", "DimensionMismatch", "EmptyDatasetWarning",
    "FormatError", "ImagePredictions", "InstancePrediction", "OmniPseudoLabel", "PipelineConfig", "SumMismatch",
    "UnlockError", "area", "mask_and", "mask_diff", "mask_or", "rle_decode", "rle_encode",
]
