"""Excess Green Index and threshold binarization of RGB orthomosaics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .raster import BinaryMask, GeoRaster

EARLY_SEASON_THRESHOLD = 0.08
POST_HARVEST_THRESHOLD = 0.07


@dataclass(frozen=True)
class SegmentationConfig:
    threshold: float = EARLY_SEASON_THRESHOLD
    zero_sum_value: float = 0.0

    def __post_init__(self):
        if not (-2.0 < self.threshold < 2.0):
            raise ConfigError(f"threshold must lie in (-2, 2), got {self.threshold}")


def exgi_values(r, g, b, zero_sum_value: float = 0.0) -> np.ndarray:
    """ExGI = 2g - r - b on band-sum normalized values, elementwise.

    Computed in float64 straight from the digital numbers.  Pixels whose
    band sum is 0 get ``zero_sum_value``.
    """
    r = np.asarray(r, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s = r + g + b
    zero = s == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        # 2g - r - b with g = G/s etc.
        out = (2.0 * g - r - b) / s
    if np.any(zero):
        out = np.where(zero, zero_sum_value, out)
    return out


def exgi(rgb: GeoRaster, cfg: SegmentationConfig | None = None) -> GeoRaster:
    """Excess Green Index raster (float64, values in [-1, 2])."""
    cfg = cfg or SegmentationConfig()
    if rgb.bands != 3:
        raise ShapeError(f"ExGI needs a 3-band RGB raster, got {rgb.bands} band(s)")
    red, green, blue = rgb.data
    out = exgi_values(red, green, blue, cfg.zero_sum_value)
    return GeoRaster(out, rgb.transform)


def binarize(e: GeoRaster, cfg: SegmentationConfig | None = None) -> BinaryMask:
    """1 where ExGI is strictly above the threshold, else 0."""
    cfg = cfg or SegmentationConfig()
    plane = e.plane
    nan = np.isnan(plane)
    if nan.any():
        row, col = np.argwhere(nan)[0]
        raise DataError(f"NaN ExGI sample at (row={row}, col={col})")
    return BinaryMask._trusted((plane > cfg.threshold).view(np.uint8), e.transform)


def segment(rgb: GeoRaster, cfg: SegmentationConfig | None = None) -> BinaryMask:
    """Vegetation mask of an RGB raster: ``binarize(exgi(rgb))``."""
    cfg = cfg or SegmentationConfig()
    return binarize(exgi(rgb, cfg), cfg)
