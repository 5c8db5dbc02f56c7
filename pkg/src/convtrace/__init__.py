"""Local pixel-correlation kernel extraction and naive-classifier evaluation."""

from .em import (
    EmConfig,
    KernelEstimate,
    NeighborhoodOffsets,
    WeightMap,
    em_fit,
    em_fit_rgb,
    expectation_step,
    maximization_step,
    neighborhood_offsets,
    residual_map,
    update_sigma,
)
from .features import FeatureSet, FeatureVector, assemble, load_features, save_features, standardize
from .imaging import ImagePlane, RgbImage, decode_image, to_planes

__version__ = "0.1.0"

__all__ = [
    "EmConfig", "KernelEstimate", "NeighborhoodOffsets", "WeightMap",
    "em_fit", "em_fit_rgb", "expectation_step", "maximization_step",
    "neighborhood_offsets", "residual_map", "update_sigma",
    "FeatureSet", "FeatureVector", "assemble", "load_features",
    "save_features", "standardize",
    "ImagePlane", "RgbImage", "decode_image", "to_planes",
    "__version__",
]
