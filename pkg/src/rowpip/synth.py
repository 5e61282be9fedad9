"""Deterministic synthetic corn fields with exact ground truth.

Plants are filled discs strung along each row centerline, weeds are discs
dropped between rows.  All randomness comes from :class:`~rowpip.rng.SplitMix64`
in a fixed draw order, so a seed reproduces the same field bit for bit on
any platform.

Coordinates in :class:`GroundTruth` are pixel coordinates with the pixel
center convention: pixel ``(col, row)`` is at ``(col, row)``.  A disc of
radius ``r`` centered at ``(cx, cy)`` covers every pixel with
``(col - cx)**2 + (row - cy)**2 <= r**2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, GenerationError
from .raster import BinaryMask, GeoTransform
from .rng import SplitMix64
from .rows import Orientation
from .weeds import BufferConfig, Grid, GridConfig, PrescriptionMap, TriggerRule

_MAX_RETRIES = 10_000


@dataclass(frozen=True)
class FieldRecipe:
    width_px: int = 6000
    height_px: int = 2000
    pixel_size_m: float = 0.0063
    row_spacing_m: float = 0.762
    row_orientation: str = "horizontal"
    plant_diameter_m: tuple[float, float] = (0.05, 0.15)
    plant_step_m: float = 0.15
    plant_dropout_prob: float = 0.0
    row_curvature: float = 0.0  # max lateral drift in px across the field
    weed_count: int = 0
    weed_diameter_m: tuple[float, float] = (0.02, 0.08)
    weed_clearance: bool = True
    buffer_half_width_m: float = BufferConfig().half_width_m
    clearance_margin_px: int = 4
    origin_x: float = 0.0
    origin_y: float | None = None  # default: height_px * pixel_size_m
    crs_label: str = "local"
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "plant_diameter_m", tuple(self.plant_diameter_m))
        object.__setattr__(self, "weed_diameter_m", tuple(self.weed_diameter_m))
        if self.width_px < 1 or self.height_px < 1:
            raise ConfigError("field dimensions must be positive")
        if not self.pixel_size_m > 0 or not self.row_spacing_m > 0 or not self.plant_step_m > 0:
            raise ConfigError("pixel size, row spacing and plant step must be > 0")
        lo, hi = self.plant_diameter_m
        if not 0 < lo <= hi:
            raise ConfigError("plant_diameter_m must be an increasing positive range")
        wlo, whi = self.weed_diameter_m
        if not 0 < wlo <= whi:
            raise ConfigError("weed_diameter_m must be an increasing positive range")
        if self.row_spacing_m < 2 * hi:
            raise ConfigError("row spacing must be at least twice the largest plant diameter")
        if not 0.0 <= self.plant_dropout_prob <= 1.0:
            raise ConfigError("plant_dropout_prob must lie in [0, 1]")
        if self.weed_count < 0 or self.row_curvature < 0:
            raise ConfigError("weed_count and row_curvature must be >= 0")
        Orientation.parse(self.row_orientation)

    @property
    def orientation(self) -> Orientation:
        return Orientation.parse(self.row_orientation)

    def transform(self) -> GeoTransform:
        oy = self.height_px * self.pixel_size_m if self.origin_y is None else self.origin_y
        return GeoTransform(self.origin_x, oy, self.pixel_size_m, self.pixel_size_m, self.crs_label)

    @property
    def clearance_px(self) -> float:
        """Minimum gap between a weed disc and any row centerline."""
        return round(self.buffer_half_width_m / self.pixel_size_m) + self.clearance_margin_px

    @classmethod
    def from_json(cls, obj: dict) -> "FieldRecipe":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown recipe keys: {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class WeedRecord:
    cx: float
    cy: float
    d: float  # diameter in pixels

    def pixels(self, shape: tuple[int, int]) -> np.ndarray:
        """(n, 2) array of (row, col) covered by the disc, clipped to ``shape``."""
        return _disc_pixels(self.cx, self.cy, self.d / 2, shape)


@dataclass
class GroundTruth:
    rows: list[np.ndarray]  # per-row (n, 2) polyline of (x, y) pixel coords
    weeds: list[WeedRecord] = field(default_factory=list)
    shape: tuple[int, int] = (0, 0)  # (height, width)
    orientation: Orientation = Orientation.HORIZONTAL

    def to_json(self) -> dict:
        return {
            "rows": [[[round(float(x), 4), round(float(y), 4)] for x, y in r] for r in self.rows],
            "weeds": [{"cx": w.cx, "cy": w.cy, "d": w.d} for w in self.weeds],
            "shape": list(self.shape),
            "orientation": self.orientation.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        try:
            return cls(
                [np.asarray(r, dtype=float).reshape(-1, 2) for r in obj["rows"]],
                [WeedRecord(float(w["cx"]), float(w["cy"]), float(w["d"])) for w in obj.get("weeds", [])],
                tuple(obj.get("shape", (0, 0))),
                Orientation.parse(obj.get("orientation", "horizontal")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"invalid ground-truth document: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except FileNotFoundError as exc:
            raise DataError(f"ground truth not found: {path}") from exc

    def weed_pixels(self) -> np.ndarray:
        if not self.weeds:
            return np.empty((0, 2), dtype=np.intp)
        return np.unique(np.concatenate([w.pixels(self.shape) for w in self.weeds]), axis=0)


def _disc_pixels(cx: float, cy: float, r: float, shape) -> np.ndarray:
    h, w = shape
    r0, r1 = max(math.ceil(cy - r), 0), min(math.floor(cy + r), h - 1)
    c0, c1 = max(math.ceil(cx - r), 0), min(math.floor(cx + r), w - 1)
    if r0 > r1 or c0 > c1:
        return np.empty((0, 2), dtype=np.intp)
    rr, cc = np.mgrid[r0:r1 + 1, c0:c1 + 1]
    inside = (cc - cx) ** 2 + (rr - cy) ** 2 <= r * r
    return np.column_stack((rr[inside], cc[inside]))


def _stamp_disc(plane: np.ndarray, cx: float, cy: float, r: float) -> None:
    h, w = plane.shape
    r0, r1 = max(math.ceil(cy - r), 0), min(math.floor(cy + r), h - 1)
    c0, c1 = max(math.ceil(cx - r), 0), min(math.floor(cx + r), w - 1)
    if r0 > r1 or c0 > c1:
        return
    yy = np.arange(r0, r1 + 1)[:, None] - cy
    xx = np.arange(c0, c1 + 1)[None, :] - cx
    plane[r0:r1 + 1, c0:c1 + 1] |= (xx * xx + yy * yy <= r * r)


def _drift(along: np.ndarray, length: float, amplitude: float) -> np.ndarray:
    """Smooth lateral offset rising from 0 to ``amplitude`` across the field."""
    if amplitude == 0 or length <= 1:
        return np.zeros_like(along, dtype=float)
    return amplitude * 0.5 * (1.0 - np.cos(np.pi * along / (length - 1)))


def generate(r: FieldRecipe) -> tuple[BinaryMask, GroundTruth]:
    """Render a field mask and its ground truth.

    Draw order (part of the reproducibility contract): row phase; then per
    row its drift sign, then per plant slot dropout and diameter; then per
    weed position and diameter, with rejected draws consumed in sequence.
    """
    rng = SplitMix64(r.rng_seed)
    horizontal = r.orientation is Orientation.HORIZONTAL
    # generate with rows along the first ("along") axis, transpose at the end
    along_len, cross_len = (r.width_px, r.height_px) if horizontal else (r.height_px, r.width_px)
    plane = np.zeros((cross_len, along_len), dtype=bool)
    ps = r.pixel_size_m
    spacing = r.row_spacing_m / ps
    step = r.plant_step_m / ps
    max_rad = r.plant_diameter_m[1] / ps / 2
    margin = max_rad + r.row_curvature + 2

    phase = rng.random()
    centers = []
    c = margin + phase * spacing
    while c <= cross_len - 1 - margin:
        centers.append(c)
        c += spacing

    along = np.arange(along_len, dtype=float)
    samples = np.unique(np.concatenate((np.arange(0, along_len, 25, dtype=float), [along_len - 1.0])))
    rows_truth: list[np.ndarray] = []
    row_cross: list[np.ndarray] = []
    for base in centers:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        cross = base + sign * _drift(along, along_len, r.row_curvature)
        row_cross.append(cross)
        pts = np.column_stack((samples, base + sign * _drift(samples, along_len, r.row_curvature)))
        rows_truth.append(pts)
        offset = rng.random() * step
        pos = offset
        while pos <= along_len - 1:
            drop = rng.random() < r.plant_dropout_prob
            dia = rng.uniform(*r.plant_diameter_m) / ps
            if not drop:
                a = int(round(pos))
                _stamp_disc(plane, pos, float(cross[min(a, along_len - 1)]), dia / 2)
            pos += step

    weeds: list[WeedRecord] = []
    for _ in range(r.weed_count):
        for _attempt in range(_MAX_RETRIES):
            pa = rng.uniform(0, along_len - 1)
            pc = rng.uniform(0, cross_len - 1)
            dia = rng.uniform(*r.weed_diameter_m) / ps
            if not r.weed_clearance or not row_cross:
                break
            a = int(round(pa))
            gap = min(abs(pc - rc[a]) for rc in row_cross) - dia / 2
            if gap >= r.clearance_px:
                break
        else:
            raise GenerationError(f"could not place weed {len(weeds) + 1} after {_MAX_RETRIES} tries")
        _stamp_disc(plane, pa, pc, dia / 2)
        if horizontal:
            weeds.append(WeedRecord(pa, pc, dia))
        else:
            weeds.append(WeedRecord(pc, pa, dia))

    if horizontal:
        mask_plane = plane
        rows = rows_truth
    else:
        mask_plane = np.ascontiguousarray(plane.T)
        rows = [pts[:, ::-1].copy() for pts in rows_truth]
    mask = BinaryMask._trusted(mask_plane.view(np.uint8), r.transform())
    truth = GroundTruth(rows, weeds, (r.height_px, r.width_px), r.orientation)
    return mask, truth


def truth_to_rx(
    gt: GroundTruth,
    grid: Grid,
    transform: GeoTransform,
    cfg: GridConfig | None = None,
    rule=None,
) -> PrescriptionMap:
    """Cell rates straight from the weed records, by brute force.

    Every weed pixel center is converted to world coordinates and tested
    against each cell rectangle with explicit comparisons (half-open on the
    low side, closed on the plot's outer max edge).  No raster pipeline,
    labeling or index arithmetic is involved.  Under ``fully-within`` each
    weed record is judged on its own, even where discs touch.
    """
    cfg = cfg or GridConfig()
    rule = TriggerRule.parse(rule or cfg.trigger_rule)
    xe, ye = grid.x_edges, grid.y_edges
    nx, ny = grid.nx, grid.ny
    sprayed = np.zeros((ny, nx), dtype=bool)
    for w in gt.weeds:
        pix = w.pixels(gt.shape)
        if pix.size == 0:
            continue
        px = transform.origin_x + (pix[:, 1] + 0.5) * transform.pixel_size_x
        py = transform.origin_y - (pix[:, 0] + 0.5) * transform.pixel_size_y
        bx0, bx1, by0, by1 = px.min(), px.max(), py.min(), py.max()
        hits = []
        for j in range(ny):
            y_lo, y_hi = ye[j], ye[j + 1]
            if by1 < y_lo or by0 > y_hi:
                continue
            in_y = (py >= y_lo) & ((py < y_hi) if j < ny - 1 else (py <= y_hi))
            if not in_y.any():
                continue
            for i in range(nx):
                x_lo, x_hi = xe[i], xe[i + 1]
                if bx1 < x_lo or bx0 > x_hi:
                    continue
                in_x = (px >= x_lo) & ((px < x_hi) if i < nx - 1 else (px <= x_hi))
                n_in = int(np.count_nonzero(in_x & in_y))
                if n_in:
                    hits.append((j, i, n_in))
        if rule is TriggerRule.ANY_OVERLAP:
            for j, i, _ in hits:
                sprayed[j, i] = True
        elif len(hits) == 1 and hits[0][2] == len(pix):
            sprayed[hits[0][0], hits[0][1]] = True
    rates = np.where(sprayed, cfg.spray_rate, cfg.no_spray_rate).astype(float)
    return PrescriptionMap(grid, rates, cfg.spray_rate, cfg.no_spray_rate)
