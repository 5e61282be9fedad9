"""Weed mapping and gridded prescription maps.

Crop rows found by PIP are widened into buffers; vegetation under a buffer
is treated as crop and removed, and whatever vegetation is left is weed.
A grid of nozzle-width cells is laid over each plot and a cell is sprayed
when it holds weed, either any weed pixel (``any-overlap``) or a whole weed
component (``fully-within``).

Point-in-cell membership uses pixel centers.  A center lying exactly on a
shared cell edge belongs to the cell with the larger index; centers on the
plot's outer max edge belong to the last cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError, ShapeError
from .raster import BinaryMask, Feature, GeoTransform, pixel_to_world
from .rows import Orientation, RowDetectionResult, RowSegment

FT = 0.3048
INCH = 0.0254

_EDGE_EPS = 1e-9


class TriggerRule(str, Enum):
    ANY_OVERLAP = "any-overlap"
    FULLY_WITHIN = "fully-within"

    @classmethod
    def parse(cls, value) -> "TriggerRule":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("_", "-"))
        except ValueError:
            raise ConfigError(f"rule must be 'any-overlap' or 'fully-within', got {value!r}") from None


@dataclass(frozen=True)
class BufferConfig:
    half_width_m: float = 3.5 * INCH

    def __post_init__(self):
        if not self.half_width_m > 0:
            raise ConfigError(f"half_width_m must be > 0, got {self.half_width_m}")


@dataclass(frozen=True)
class GridConfig:
    cell_width_m: float = 1.67 * FT
    cell_length_m: float = 10 * FT
    spray_rate: float = 15.0
    no_spray_rate: float = 0.0
    trigger_rule: TriggerRule = TriggerRule.ANY_OVERLAP

    def __post_init__(self):
        if not (self.cell_width_m > 0 and self.cell_length_m > 0):
            raise ConfigError("cell dimensions must be > 0")
        if not self.spray_rate > self.no_spray_rate >= 0:
            raise ConfigError("need spray_rate > no_spray_rate >= 0")
        object.__setattr__(self, "trigger_rule", TriggerRule.parse(self.trigger_rule))


@dataclass(frozen=True)
class Plot:
    """Axis-aligned plot rectangle in world meters."""

    plot_id: str
    min_x: float
    min_y: float
    max_x: float
    max_y: float
    treatment: str = ""

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def length(self) -> float:
        return self.max_y - self.min_y

    @property
    def area(self) -> float:
        return self.width * self.length

    def contains(self, x, y):
        return (x >= self.min_x) & (x <= self.max_x) & (y >= self.min_y) & (y <= self.max_y)

    def to_feature(self) -> Feature:
        props = {"plot_id": self.plot_id}
        if self.treatment:
            props["treatment"] = self.treatment
        return Feature.rectangle(self.min_x, self.min_y, self.max_x, self.max_y, **props)

    @classmethod
    def from_feature(cls, f: Feature, default_id: str = "plot") -> "Plot":
        x0, y0, x1, y1 = f.bbox()
        p = f.properties
        return cls(str(p.get("plot_id", p.get("id", default_id))), x0, y0, x1, y1, str(p.get("treatment", "")))


@dataclass(frozen=True)
class Cell:
    i: int  # column index, along x (across travel)
    j: int  # row index, along y (travel axis)
    min_x: float
    min_y: float
    max_x: float
    max_y: float
    rate: float | None = None

    @property
    def area(self) -> float:
        return (self.max_x - self.min_x) * (self.max_y - self.min_y)

    def polygon(self) -> list[tuple[float, float]]:
        return [
            (self.min_x, self.min_y),
            (self.max_x, self.min_y),
            (self.max_x, self.max_y),
            (self.min_x, self.max_y),
            (self.min_x, self.min_y),
        ]


@dataclass(eq=False)
class Grid:
    """Cell edges of one plot; cell (i, j) spans x_edges[i:i+2] x y_edges[j:j+2]."""

    x_edges: np.ndarray
    y_edges: np.ndarray
    plot_id: str = ""

    @property
    def nx(self) -> int:
        return self.x_edges.size - 1

    @property
    def ny(self) -> int:
        return self.y_edges.size - 1

    @property
    def cells(self) -> list[Cell]:
        xe, ye = self.x_edges, self.y_edges
        return [
            Cell(i, j, float(xe[i]), float(ye[j]), float(xe[i + 1]), float(ye[j + 1]))
            for j in range(self.ny)
            for i in range(self.nx)
        ]

    def cell_areas(self) -> np.ndarray:
        """(ny, nx) array of cell areas."""
        return np.outer(np.diff(self.y_edges), np.diff(self.x_edges))

    def locate(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Cell indices (i, j) of world points; -1 where outside the plot."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return _locate_1d(self.x_edges, x), _locate_1d(self.y_edges, y)


def _locate_1d(edges: np.ndarray, v: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, v, side="right") - 1
    n = edges.size - 1
    idx = np.where(v == edges[-1], n - 1, idx)
    return np.where((v < edges[0]) | (v > edges[-1]), -1, idx)


def _edges(lo: float, hi: float, step: float) -> np.ndarray:
    n = max(1, math.ceil((hi - lo) / step - _EDGE_EPS))
    e = lo + np.arange(n + 1) * step
    e[-1] = hi
    return e


def build_grid(plot: Plot, cfg: GridConfig | None = None) -> Grid:
    """Cells anchored at the plot's minimum corner, last row/column clipped."""
    cfg = cfg or GridConfig()
    if not (plot.width > 0 and plot.length > 0):
        raise DataError(f"plot {plot.plot_id!r} must have positive width and length")
    return Grid(
        _edges(plot.min_x, plot.max_x, cfg.cell_width_m),
        _edges(plot.min_y, plot.max_y, cfg.cell_length_m),
        plot.plot_id,
    )


@dataclass(eq=False)
class PrescriptionMap:
    """Rate per grid cell for one plot; ``rates`` has shape (ny, nx)."""

    grid: Grid
    rates: np.ndarray
    spray_rate: float = 15.0
    no_spray_rate: float = 0.0

    @property
    def plot_id(self) -> str:
        return self.grid.plot_id

    @property
    def cells(self) -> list[Cell]:
        return [
            Cell(c.i, c.j, c.min_x, c.min_y, c.max_x, c.max_y, float(self.rates[c.j, c.i]))
            for c in self.grid.cells
        ]

    @property
    def sprayed(self) -> np.ndarray:
        return self.rates == self.spray_rate

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        g = self.grid
        return float(g.x_edges[0]), float(g.y_edges[0]), float(g.x_edges[-1]), float(g.y_edges[-1])

    def rate_at(self, x, y, default=np.nan) -> np.ndarray:
        i, j = self.grid.locate(x, y)
        inside = (i >= 0) & (j >= 0)
        out = np.full(np.shape(i), default, dtype=float)
        out[inside] = self.rates[j[inside], i[inside]]
        return out

    def to_features(self) -> list[Feature]:
        return [
            Feature.rectangle(
                c.min_x, c.min_y, c.max_x, c.max_y, rate=c.rate, i=c.i, j=c.j, plot_id=self.plot_id,
                spray_rate=self.spray_rate, no_spray_rate=self.no_spray_rate,
            )
            for c in self.cells
        ]


def prescription_from_features(features: Iterable[Feature]) -> list[PrescriptionMap]:
    """Rebuild per-plot maps from cell rectangles carrying rate/i/j properties."""
    by_plot: dict[str, list[Feature]] = {}
    for f in features:
        by_plot.setdefault(str(f.properties.get("plot_id", "")), []).append(f)
    maps = []
    for pid, feats in by_plot.items():
        nx = max(int(f.properties["i"]) for f in feats) + 1
        ny = max(int(f.properties["j"]) for f in feats) + 1
        xe = np.full(nx + 1, np.nan)
        ye = np.full(ny + 1, np.nan)
        rates = np.full((ny, nx), np.nan)
        for f in feats:
            i, j = int(f.properties["i"]), int(f.properties["j"])
            x0, y0, x1, y1 = f.bbox()
            xe[i], xe[i + 1] = x0, x1
            ye[j], ye[j + 1] = y0, y1
            rates[j, i] = float(f.properties["rate"])
        if np.isnan(rates).any() or np.isnan(xe).any() or np.isnan(ye).any():
            raise DataError(f"prescription for plot {pid!r} does not tile its rectangle")
        props = feats[0].properties
        if "spray_rate" in props and "no_spray_rate" in props:
            spray, no_spray = float(props["spray_rate"]), float(props["no_spray_rate"])
        else:
            # files without the rate pair: infer, a lone 0 rate means no-spray
            vals = np.unique(rates)
            defaults = GridConfig()
            if vals.size > 1:
                spray, no_spray = float(vals.max()), float(vals.min())
            elif vals[0] == defaults.no_spray_rate:
                spray, no_spray = defaults.spray_rate, float(vals[0])
            else:
                spray, no_spray = float(vals[0]), defaults.no_spray_rate
        bad = ~np.isin(rates, (spray, no_spray))
        if bad.any():
            raise DataError(f"prescription for plot {pid!r} has rates outside {{{spray}, {no_spray}}}")
        maps.append(PrescriptionMap(Grid(xe, ye, pid), rates, spray, no_spray))
    return maps


@dataclass
class WeedComponent:
    label: int
    pixels: np.ndarray = field(repr=False)  # (n, 2) rows of (row, col)
    bbox: tuple[int, int, int, int]  # (row_min, col_min, row_max, col_max)
    area_m2: float


_EIGHT = np.ones((3, 3), dtype=bool)


def buffer_rows(
    lines: RowDetectionResult | Sequence[RowSegment],
    cfg: BufferConfig | None = None,
    shape: tuple[int, int] | None = None,
    transform: GeoTransform | None = None,
) -> BinaryMask:
    """Band of ``round(half_width_m / pixel)`` pixels either side of each peak.

    The band replaces the narrow PIP drawing width; it runs along the
    segment's span and is clipped to the raster.
    """
    cfg = cfg or BufferConfig()
    if isinstance(lines, RowDetectionResult):
        segments = lines.segments
        shape = lines.line_mask.shape
        transform = lines.line_mask.transform
    else:
        segments = list(lines)
        if shape is None or transform is None:
            raise ConfigError("shape and transform are required when passing bare segments")
    h, w = shape
    out = np.zeros((h, w), dtype=np.uint8)
    orientations = {s.orientation for s in segments}
    for orient in orientations:
        px = transform.pixel_size_y if orient is Orientation.HORIZONTAL else transform.pixel_size_x
        hw = int(round(cfg.half_width_m / px))
        if hw < 1:
            raise ConfigError(
                f"buffer half-width {cfg.half_width_m} m is under one pixel ({px} m)"
            )
    for s in segments:
        horizontal = s.orientation is Orientation.HORIZONTAL
        px = transform.pixel_size_y if horizontal else transform.pixel_size_x
        hw = int(round(cfg.half_width_m / px))
        a0, a1 = s.span_px[0], s.span_px[1] + 1
        if horizontal:
            out[max(s.peak_px - hw, 0):min(s.peak_px + hw + 1, h), max(a0, 0):min(a1, w)] = 1
        else:
            out[max(a0, 0):min(a1, h), max(s.peak_px - hw, 0):min(s.peak_px + hw + 1, w)] = 1
    return BinaryMask._trusted(out, transform)


def weed_mask(veg: BinaryMask, row_buffer: BinaryMask) -> BinaryMask:
    """Vegetation outside the row buffers."""
    if not veg.same_grid(row_buffer):
        raise ShapeError(
            f"grid mismatch: vegetation {veg.shape} vs buffer {row_buffer.shape} "
            "(shape and transform must match)"
        )
    out = veg.plane & (row_buffer.plane ^ 1)
    return BinaryMask._trusted(out, veg.transform)


def label_components(m: BinaryMask) -> tuple[np.ndarray, int]:
    """8-connected labels, numbered 1..n by first pixel in row-major order."""
    labels, n = ndimage.label(m.plane, structure=_EIGHT)
    if n == 0:
        return labels, 0
    flat = labels.ravel()
    idx = np.flatnonzero(flat)
    lab = flat[idx]
    first = np.full(n + 1, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(first, lab, idx)
    order = np.argsort(first[1:], kind="stable") + 1
    if np.any(order != np.arange(1, n + 1)):
        remap = np.zeros(n + 1, dtype=labels.dtype)
        remap[order] = np.arange(1, n + 1)
        labels = remap[labels]
    return labels, n


def connected_components(m: BinaryMask) -> list[WeedComponent]:
    """8-connected weed components sorted by first pixel (row-major)."""
    labels, n = label_components(m)
    if n == 0:
        return []
    rows, cols = np.nonzero(labels)
    lab = labels[rows, cols]
    order = np.argsort(lab, kind="stable")
    rows, cols, lab = rows[order], cols[order], lab[order]
    bounds = np.searchsorted(lab, np.arange(1, n + 2))
    pa = m.transform.pixel_area
    out = []
    for k in range(n):
        r = rows[bounds[k]:bounds[k + 1]]
        c = cols[bounds[k]:bounds[k + 1]]
        out.append(
            WeedComponent(
                k + 1,
                np.column_stack((r, c)),
                (int(r.min()), int(c.min()), int(r.max()), int(c.max())),
                r.size * pa,
            )
        )
    return out


def _pixel_cells(grid: Grid, transform: GeoTransform, rows, cols) -> np.ndarray:
    """Flat cell id (j * nx + i) of each pixel center, -1 outside the grid."""
    x, y = pixel_to_world(transform, cols, rows)
    i, j = grid.locate(np.atleast_1d(x), np.atleast_1d(y))
    inside = (i >= 0) & (j >= 0)
    return np.where(inside, j * grid.nx + i, -1)


def _window(grid: Grid, transform: GeoTransform, shape) -> tuple[slice, slice]:
    """Pixel window whose centers can fall inside the grid."""
    h, w = shape
    x0, x1 = grid.x_edges[0], grid.x_edges[-1]
    y0, y1 = grid.y_edges[0], grid.y_edges[-1]
    c0 = int(math.floor((x0 - transform.origin_x) / transform.pixel_size_x - 0.5)) - 1
    c1 = int(math.ceil((x1 - transform.origin_x) / transform.pixel_size_x - 0.5)) + 2
    r0 = int(math.floor((transform.origin_y - y1) / transform.pixel_size_y - 0.5)) - 1
    r1 = int(math.ceil((transform.origin_y - y0) / transform.pixel_size_y - 0.5)) + 2
    return slice(max(r0, 0), max(min(r1, h), 0)), slice(max(c0, 0), max(min(c1, w), 0))


def assign_rates(
    grid: Grid,
    weeds: BinaryMask,
    cfg: GridConfig | None = None,
    labels: np.ndarray | None = None,
) -> PrescriptionMap:
    """Spray/no-spray rate for every cell of ``grid``.

    ``any-overlap``: a cell is sprayed when at least one weed pixel center
    lies in it.  ``fully-within``: only when some 8-connected weed component
    has all of its pixel centers inside that one cell, so a weed crossing a
    cell edge triggers neither cell.  ``labels`` may pass a precomputed
    :func:`label_components` array.
    """
    cfg = cfg or GridConfig()
    sprayed = np.zeros(grid.nx * grid.ny, dtype=bool)
    plane = weeds.plane
    if cfg.trigger_rule is TriggerRule.ANY_OVERLAP:
        rs, cs = _window(grid, weeds.transform, plane.shape)
        rows, cols = np.nonzero(plane[rs, cs])
        ids = _pixel_cells(grid, weeds.transform, rows + rs.start, cols + cs.start)
        sprayed[ids[ids >= 0]] = True
    else:
        if labels is None:
            labels, n = label_components(weeds)
        else:
            n = int(labels.max())
        if n:
            rows, cols = np.nonzero(labels)
            lab = labels[rows, cols]
            ids = _pixel_cells(grid, weeds.transform, rows, cols)
            lo = np.full(n + 1, np.iinfo(np.int64).max, dtype=np.int64)
            hi = np.full(n + 1, -2, dtype=np.int64)
            np.minimum.at(lo, lab, ids)
            np.maximum.at(hi, lab, ids)
            whole = (lo[1:] == hi[1:]) & (lo[1:] >= 0)
            sprayed[lo[1:][whole]] = True
    rates = np.where(sprayed, cfg.spray_rate, cfg.no_spray_rate).reshape(grid.ny, grid.nx)
    return PrescriptionMap(grid, rates.astype(float), cfg.spray_rate, cfg.no_spray_rate)


def no_spray_area(rx: PrescriptionMap | Sequence[PrescriptionMap]) -> float:
    """Total polygon area of cells carrying the no-spray rate."""
    if not isinstance(rx, PrescriptionMap):
        return float(sum(no_spray_area(m) for m in rx))
    areas = rx.grid.cell_areas()
    return float(areas[rx.rates == rx.no_spray_rate].sum())


def spray_area(rx: PrescriptionMap) -> float:
    areas = rx.grid.cell_areas()
    return float(areas[rx.rates != rx.no_spray_rate].sum())


def prescribe(
    weeds: BinaryMask,
    plots: Sequence[Plot],
    cfg: GridConfig | None = None,
) -> list[PrescriptionMap]:
    """Grid and rate every plot from one weed mask."""
    cfg = cfg or GridConfig()
    labels = label_components(weeds)[0] if cfg.trigger_rule is TriggerRule.FULLY_WITHIN else None
    return [assign_rates(build_grid(p, cfg), weeds, cfg, labels) for p in plots]
