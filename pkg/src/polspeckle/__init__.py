"""Deep-learning speckle filtering for dual-pol SAR covariance imagery."""

from .polsar import (
    Cov2,
    IntensityQuad,
    boxcar_multilook,
    forward_transform,
    inverse_transform,
    project_psd,
    temporal_average,
    transform_raster,
    untransform_raster,
)
from .raster import BandStack, C2Raster, TemporalStack, read_raster, write_raster

__version__ = "0.1.0"

__all__ = [
    "BandStack", "C2Raster", "Cov2", "IntensityQuad", "TemporalStack", "boxcar_multilook",
    "forward_transform", "inverse_transform", "project_psd", "read_raster", "temporal_average",
    "transform_raster", "untransform_raster", "write_raster",
]
