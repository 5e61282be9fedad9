"""Pixel Intensity Projection (PIP) crop-row detection.

The binary vegetation mask is cut into fixed-size tiles, scanned left to
right and top to bottom.  Inside each tile every scanline parallel to the
rows is summed; crop rows show up as peaks of that projection profile.  A
line ``line_half_width_px`` pixels either side of each peak is stamped
across the tile into an output mask, and each peak becomes one
georeferenced ``RowSegment``.  Segments are deliberately not merged across
tiles: one tile, one segment per detected row.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .raster import BinaryMask, Feature, GeoTransform, pixel_to_world

NOMINAL_ROW_SPACING_M = 0.762  # 30 in


class Orientation(str, Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"

    @classmethod
    def parse(cls, value) -> "Orientation":
        if isinstance(value, cls):
            return value
        v = str(value).lower().removeprefix("rows-")
        try:
            return cls(v)
        except ValueError:
            raise ConfigError(f"orientation must be 'horizontal' or 'vertical', got {value!r}") from None


@dataclass(frozen=True)
class TileSpec:
    tile_width: int = 3000
    tile_height: int = 2000

    def __post_init__(self):
        if self.tile_width < 1 or self.tile_height < 1:
            raise ConfigError(f"tile dimensions must be >= 1, got {self.tile_width}x{self.tile_height}")

    @classmethod
    def parse(cls, text: str) -> "TileSpec":
        try:
            w, h = (int(v) for v in text.lower().split("x"))
        except ValueError:
            raise ConfigError(f"tile must look like 3000x2000, got {text!r}") from None
        return cls(w, h)


@dataclass(frozen=True)
class PeakParams:
    """Peak picking and line drawing settings.

    ``min_distance_px=None`` means "half the nominal row spacing", resolved
    against the raster's pixel size by :meth:`resolved`.
    """

    min_distance_px: int | None = None
    min_height_frac: float = 0.10
    min_height_abs: float = 1.0
    line_half_width_px: int = 3
    row_spacing_m: float = NOMINAL_ROW_SPACING_M

    def __post_init__(self):
        if self.min_distance_px is not None and self.min_distance_px < 1:
            raise ConfigError("min_distance_px must be >= 1")
        if not 0.0 <= self.min_height_frac <= 1.0:
            raise ConfigError("min_height_frac must lie in [0, 1]")
        if self.line_half_width_px < 0:
            raise ConfigError("line_half_width_px must be >= 0")
        if self.row_spacing_m <= 0:
            raise ConfigError("row_spacing_m must be > 0")

    def resolved(self, pixel_size: float) -> "PeakParams":
        if self.min_distance_px is not None:
            return self
        d = max(1, int(round(0.5 * self.row_spacing_m / pixel_size)))
        return PeakParams(d, self.min_height_frac, self.min_height_abs, self.line_half_width_px, self.row_spacing_m)


@dataclass(frozen=True)
class Tile:
    col_index: int
    row_index: int
    col_offset: int
    row_offset: int
    data: np.ndarray = field(repr=False, compare=False)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def offset(self) -> tuple[int, int]:
        return self.col_offset, self.row_offset


@dataclass(frozen=True)
class RowProfile:
    values: np.ndarray
    orientation: Orientation


@dataclass(frozen=True)
class RowSegment:
    """One detected row line inside one tile.

    ``peak_px`` is the global cross-row pixel coordinate (a pixel row for
    horizontal rows, a pixel column for vertical rows).  ``span_px`` holds
    the first and last global pixel index along the row axis.
    """

    tile_col_index: int
    tile_row_index: int
    peak_px: int
    span_px: tuple[int, int]
    world_start: tuple[float, float]
    world_end: tuple[float, float]
    orientation: Orientation = Orientation.HORIZONTAL

    def pixel_endpoints(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """((col, row), (col, row)) of the two end pixels."""
        a, b = self.span_px
        if self.orientation is Orientation.HORIZONTAL:
            return (a, self.peak_px), (b, self.peak_px)
        return (self.peak_px, a), (self.peak_px, b)

    def to_feature(self) -> Feature:
        return Feature.line(
            [self.world_start, self.world_end],
            tile_col=self.tile_col_index,
            tile_row=self.tile_row_index,
            peak_px=self.peak_px,
            span_start=self.span_px[0],
            span_end=self.span_px[1],
            orientation=self.orientation.value,
        )

    @classmethod
    def from_feature(cls, f: Feature) -> "RowSegment":
        p = f.properties
        return cls(
            int(p["tile_col"]),
            int(p["tile_row"]),
            int(p["peak_px"]),
            (int(p["span_start"]), int(p["span_end"])),
            tuple(f.coordinates[0]),
            tuple(f.coordinates[-1]),
            Orientation.parse(p.get("orientation", "horizontal")),
        )


@dataclass(frozen=True)
class RowDetectionResult:
    segments: list[RowSegment]
    line_mask: BinaryMask
    orientation: Orientation = Orientation.HORIZONTAL
    params: PeakParams | None = None

    def features(self) -> list[Feature]:
        return [s.to_feature() for s in self.segments]


def tile_grid(mask, spec: TileSpec | None = None) -> list[Tile]:
    """Split a mask into tiles, left to right then top to bottom.

    Edge tiles are smaller than ``spec`` when the raster does not divide
    evenly; nothing is padded.
    """
    spec = spec or TileSpec()
    plane = mask.plane if isinstance(mask, BinaryMask) else np.asarray(mask)
    h, w = plane.shape
    tiles = []
    for k, r0 in enumerate(range(0, h, spec.tile_height)):
        for j, c0 in enumerate(range(0, w, spec.tile_width)):
            view = plane[r0:r0 + spec.tile_height, c0:c0 + spec.tile_width]
            tiles.append(Tile(j, k, c0, r0, view))
    return tiles


def projection_profile(tile, orientation=Orientation.HORIZONTAL) -> RowProfile:
    """Per-scanline sums of a binary tile.

    Horizontal rows sum each pixel row (profile indexed by y); vertical rows
    sum each pixel column (profile indexed by x).
    """
    orientation = Orientation.parse(orientation)
    arr = tile.data if isinstance(tile, Tile) else (tile.plane if isinstance(tile, BinaryMask) else np.asarray(tile))
    axis = 1 if orientation is Orientation.HORIZONTAL else 0
    # int32 accumulation is ~2x faster than int64 and cannot overflow for
    # scanlines shorter than 2**31 pixels
    values = arr.sum(axis=axis, dtype=np.int32)
    return RowProfile(values, orientation)


def _local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima; plateaus resolve to floor(midpoint).

    The first and last samples are never maxima because one neighbour is
    unknown.
    """
    n = x.size
    if n < 3:
        return np.empty(0, dtype=np.intp)
    change = np.flatnonzero(x[1:] != x[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [n])) - 1  # inclusive
    vals = x[starts]
    if vals.size < 3:
        return np.empty(0, dtype=np.intp)
    inner = slice(1, -1)
    is_peak = (vals[inner] > vals[:-2]) & (vals[inner] > vals[2:])
    s = starts[inner][is_peak]
    e = ends[inner][is_peak]
    return (s + e) // 2


def find_peaks(profile, params: PeakParams | None = None) -> np.ndarray:
    """Row peaks of a projection profile, sorted ascending.

    Candidates are strict local maxima at least
    ``max(min_height_abs, min_height_frac * max(profile))`` high.  They are
    then accepted greedily from the highest down (ties: lower index first),
    discarding any candidate closer than ``min_distance_px`` to one already
    accepted.
    """
    params = params or PeakParams(min_distance_px=1)
    x = profile.values if isinstance(profile, RowProfile) else np.asarray(profile)
    if x.size == 0:
        return np.empty(0, dtype=np.intp)
    cand = _local_maxima(x)
    if cand.size == 0:
        return cand
    floor = max(params.min_height_abs, params.min_height_frac * float(x.max()))
    cand = cand[x[cand] >= floor]
    dist = params.min_distance_px or 1
    if dist <= 1 or cand.size <= 1:
        return cand
    heights = x[cand]
    order = np.lexsort((cand, -heights.astype(np.int64)))
    keep = np.ones(cand.size, dtype=bool)
    # cand is ascending, so neighbours within dist form a contiguous index range
    for i in order:
        if not keep[i]:
            continue
        lo = np.searchsorted(cand, cand[i] - dist + 1, side="left")
        hi = np.searchsorted(cand, cand[i] + dist - 1, side="right")
        keep[lo:i] = False
        keep[i + 1:hi] = False
    return cand[keep]


def draw_segments(
    peaks: Sequence[int],
    tile: Tile,
    transform: GeoTransform,
    params: PeakParams | None = None,
    orientation=Orientation.HORIZONTAL,
    out: np.ndarray | None = None,
) -> list[RowSegment]:
    """Stamp a line band around each peak into ``out`` and build segments.

    ``out`` is the full-raster line plane (modified in place, OR semantics);
    bands are clipped to the tile.
    """
    params = params or PeakParams()
    orientation = Orientation.parse(orientation)
    hw = params.line_half_width_px
    horizontal = orientation is Orientation.HORIZONTAL
    cross_off, along_off = (tile.row_offset, tile.col_offset) if horizontal else (tile.col_offset, tile.row_offset)
    cross_len, along_len = (tile.height, tile.width) if horizontal else (tile.width, tile.height)
    segments = []
    for k in peaks:
        k = int(k)
        lo = max(k - hw, 0) + cross_off
        hi = min(k + hw, cross_len - 1) + cross_off + 1
        a0, a1 = along_off, along_off + along_len
        if out is not None:
            if horizontal:
                out[lo:hi, a0:a1] = 1
            else:
                out[a0:a1, lo:hi] = 1
        peak = k + cross_off
        span = (a0, a1 - 1)
        if horizontal:
            start = pixel_to_world(transform, span[0], peak)
            end = pixel_to_world(transform, span[1], peak)
        else:
            start = pixel_to_world(transform, peak, span[0])
            end = pixel_to_world(transform, peak, span[1])
        segments.append(RowSegment(tile.col_index, tile.row_index, peak, span, start, end, orientation))
    return segments


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("ROWPIP_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def detect_rows(
    mask: BinaryMask,
    spec: TileSpec | None = None,
    params: PeakParams | None = None,
    orientation=Orientation.HORIZONTAL,
    threads: int | None = None,
) -> RowDetectionResult:
    """Run PIP over a whole mask.

    Tiles are independent; with ``threads > 1`` profiles and peaks are
    computed concurrently.  Results are assembled in tile order, so the
    output does not depend on scheduling.
    """
    spec = spec or TileSpec()
    orientation = Orientation.parse(orientation)
    t = mask.transform
    cross_px = t.pixel_size_y if orientation is Orientation.HORIZONTAL else t.pixel_size_x
    params = (params or PeakParams()).resolved(cross_px)
    tiles = tile_grid(mask, spec)

    def work(tile: Tile) -> np.ndarray:
        return find_peaks(projection_profile(tile, orientation), params)

    n = _resolve_threads(threads)
    if n > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            all_peaks = list(pool.map(work, tiles))
    else:
        all_peaks = [work(tile) for tile in tiles]

    out = np.zeros(mask.shape, dtype=np.uint8)
    segments: list[RowSegment] = []
    for tile, peaks in zip(tiles, all_peaks):
        segments.extend(draw_segments(peaks, tile, t, params, orientation, out))
    return RowDetectionResult(segments, BinaryMask._trusted(out, t), orientation, params)


def segments_from_features(features: Iterable[Feature]) -> list[RowSegment]:
    return [RowSegment.from_feature(f) for f in features]
