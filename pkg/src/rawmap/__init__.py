"""Learned 3x3 transforms for RAW illumination and sensor mapping."""

from .color import (Chromaticity, Illuminant, RawImage, angular_error, apply_transform,
                    diagonal_transform, fit_transform_lsq, neutral_mask, saturation_mask,
                    to_chromaticity)
from .estimators import (DiagonalMapper, IlluminationMapper, KNNMapper, SensorKNNMapper,
                         SensorMapper)

__version__ = "0.1.0"

__all__ = [
    "Chromaticity", "Illuminant", "RawImage", "angular_error", "apply_transform",
    "diagonal_transform", "fit_transform_lsq", "neutral_mask", "saturation_mask",
    "to_chromaticity", "DiagonalMapper", "IlluminationMapper", "KNNMapper", "SensorKNNMapper",
    "SensorMapper",
]
