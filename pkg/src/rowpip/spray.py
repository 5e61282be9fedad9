"""Boom sprayer simulation producing an as-applied raster.

The sprayer drives straight passes parallel to the cell length axis (world
Y).  Each control tick (``1 / control_rate_hz`` seconds) every nozzle looks
up the prescription cell under its center and commands that rate; outside
every prescription the default rate is commanded.  A commanded change takes
effect after the actuation delay, and while travelling each nozzle paints
a ``nozzle_spacing_m`` wide strip at whatever rate is in effect.

Nozzle ``n`` of a pass sits at ``left + (n + 0.5) * nozzle_spacing_m`` with
``left = centerline - boom_width_m / 2``, so nozzle columns line up with
prescription columns anchored at the same left edge.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .raster import GeoRaster, GeoTransform
from .weeds import FT, Plot, PrescriptionMap

MPH = 0.44704

LOG_COLUMNS = ("time_s", "pass", "nozzle", "x_m", "y_m", "commanded_rate", "applied_rate")


@dataclass(frozen=True)
class SprayerSpec:
    boom_width_m: float = 136.6 * FT
    nozzle_spacing_m: float = 1.67 * FT
    nozzle_count: int | None = None
    speed_mps: float = 6.5 * MPH
    control_rate_hz: float = 10.0
    actuation_delay_s: float = 0.0
    off_delay_s: float | None = None
    default_rate: float = 15.0
    gps_sigma_m: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("boom_width_m", "nozzle_spacing_m", "speed_mps", "control_rate_hz", "default_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.actuation_delay_s < 0 or (self.off_delay_s is not None and self.off_delay_s < 0):
            raise ConfigError("delays must be >= 0")
        if self.gps_sigma_m < 0:
            raise ConfigError("gps_sigma_m must be >= 0")
        if self.nozzle_count is None:
            object.__setattr__(self, "nozzle_count", max(1, round(self.boom_width_m / self.nozzle_spacing_m)))
        if self.nozzle_count < 1:
            raise ConfigError("nozzle_count must be >= 1")

    @property
    def tick_distance_m(self) -> float:
        return self.speed_mps / self.control_rate_hz

    @property
    def on_delay(self) -> float:
        return self.actuation_delay_s

    @property
    def off_delay(self) -> float:
        return self.actuation_delay_s if self.off_delay_s is None else self.off_delay_s


@dataclass(frozen=True)
class Pass:
    start: tuple[float, float]
    end: tuple[float, float]

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    @property
    def centerline_x(self) -> float:
        return self.start[0]

    @property
    def heading(self) -> float:
        """+1 when travelling north (+Y), -1 when travelling south."""
        return 1.0 if self.end[1] >= self.start[1] else -1.0


@dataclass(frozen=True)
class PassPlan:
    passes: list[Pass]


@dataclass(frozen=True)
class RasterGrid:
    transform: GeoTransform
    width: int
    height: int

    @classmethod
    def covering(cls, bounds: tuple[float, float, float, float], pixel_size: float, crs_label: str = "") -> "RasterGrid":
        x0, y0, x1, y1 = bounds
        w = max(1, math.ceil((x1 - x0) / pixel_size - 1e-9))
        h = max(1, math.ceil((y1 - y0) / pixel_size - 1e-9))
        return cls(GeoTransform(x0, y1, pixel_size, pixel_size, crs_label), w, h)


@dataclass(eq=False)
class AsAppliedMap:
    """Applied rate per pixel (NaN where never sprayed over) plus the tick log."""

    raster: GeoRaster
    log: dict[str, np.ndarray] = field(repr=False)
    warnings: list[str] = field(default_factory=list)

    @property
    def rates(self) -> np.ndarray:
        return self.raster.plane

    def to_uint8(self, nodata: int = 255) -> GeoRaster:
        r = self.rates
        out = np.where(np.isnan(r), nodata, np.clip(np.rint(np.nan_to_num(r)), 0, 254)).astype(np.uint8)
        return GeoRaster(out, self.raster.transform, nodata)

    def write_log(self, path) -> None:
        path = Path(path)
        try:
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(LOG_COLUMNS)
                cols = [self.log[c] for c in LOG_COLUMNS]
                for row in zip(*cols):
                    w.writerow(
                        [f"{row[0]:.3f}", int(row[1]), int(row[2]), f"{row[3]:.4f}", f"{row[4]:.4f}",
                         f"{row[5]:g}", f"{row[6]:g}"]
                    )
        except OSError as exc:
            raise DataError(f"cannot write tick log {path}: {exc}") from exc


def plan_passes(field_rect: Plot | tuple[float, float, float, float], spec: SprayerSpec | None = None) -> PassPlan:
    """Parallel north/south passes one boom width apart, serpentine order.

    The first centerline is half a boom in from the west edge.
    """
    spec = spec or SprayerSpec()
    if isinstance(field_rect, Plot):
        x0, y0, x1, y1 = field_rect.min_x, field_rect.min_y, field_rect.max_x, field_rect.max_y
    else:
        x0, y0, x1, y1 = field_rect
    width = x1 - x0
    if width < spec.nozzle_spacing_m or y1 <= y0:
        raise ConfigError(f"field {width:.3f} m wide is narrower than one nozzle swath")
    n = max(1, math.ceil(width / spec.boom_width_m - 1e-9))
    passes = []
    for k in range(n):
        cx = x0 + spec.boom_width_m / 2 + k * spec.boom_width_m
        if k % 2 == 0:
            passes.append(Pass((cx, y0), (cx, y1)))
        else:
            passes.append(Pass((cx, y1), (cx, y0)))
    return PassPlan(passes)


def _lookup(maps: Sequence[PrescriptionMap], x: np.ndarray, y: np.ndarray, default: float) -> np.ndarray:
    out = np.full(np.broadcast(x, y).shape, np.nan)
    for m in maps:
        r = m.rate_at(*np.broadcast_arrays(x, y))
        fill = np.isnan(out) & ~np.isnan(r)
        out[fill] = r[fill]
    out[np.isnan(out)] = default
    return out


def _rows_in(lo: float, hi: float, t: GeoTransform, height: int) -> tuple[int, int]:
    """Pixel rows whose center y lies in [lo, hi)."""
    r0 = math.floor((t.origin_y - hi) / t.pixel_size_y - 0.5) + 1
    r1 = math.floor((t.origin_y - lo) / t.pixel_size_y - 0.5) + 1
    return max(r0, 0), min(r1, height)


def _cols_in(lo: float, hi: float, t: GeoTransform, width: int) -> tuple[int, int]:
    """Pixel columns whose center x lies in [lo, hi)."""
    c0 = math.ceil((lo - t.origin_x) / t.pixel_size_x - 0.5)
    c1 = math.ceil((hi - t.origin_x) / t.pixel_size_x - 0.5)
    return max(c0, 0), min(c1, width)


def _transitions(cmd: np.ndarray, times: np.ndarray, initial: float, on_delay: float, off_delay: float):
    """Effect times and values of the applied-rate changes for one nozzle.

    A change issued at tick time t takes effect at ``t + delay`` (off delay
    when switching to 0, on delay otherwise), never before the previous
    change took effect.
    """
    prev = np.concatenate(([initial], cmd[:-1]))
    k = np.flatnonzero(cmd != prev)
    if k.size == 0:
        return np.empty(0), np.empty(0)
    vals = cmd[k]
    eff = times[k] + np.where(vals == 0, off_delay, on_delay)
    eff = np.maximum.accumulate(eff)
    return eff, vals


def simulate(
    rx: PrescriptionMap | Sequence[PrescriptionMap],
    spec: SprayerSpec | None = None,
    plan: PassPlan | None = None,
    grid: RasterGrid | None = None,
    pixel_size: float = 0.01,
    log: bool = True,
) -> AsAppliedMap:
    """Drive ``plan`` over ``rx`` and paint what each nozzle applies.

    Without ``plan`` a plan over the prescriptions' bounding box is made;
    without ``grid`` the raster covers that same box at ``pixel_size``.
    Later passes overwrite earlier ones where swaths overlap.
    """
    spec = spec or SprayerSpec()
    maps = [rx] if isinstance(rx, PrescriptionMap) else list(rx)
    if not maps:
        raise DataError("no prescription maps to simulate")
    bx = [m.bounds for m in maps]
    bbox = (min(b[0] for b in bx), min(b[1] for b in bx), max(b[2] for b in bx), max(b[3] for b in bx))
    plan = plan or plan_passes(bbox, spec)
    grid = grid or RasterGrid.covering(bbox, pixel_size)
    t = grid.transform
    out = np.full((grid.height, grid.width), np.nan, dtype=np.float32)

    notes = []
    d = spec.tick_distance_m
    min_len = min(float(np.diff(m.grid.y_edges).min()) for m in maps)
    if d > min_len:
        msg = f"tick distance {d:.3f} m exceeds cell length {min_len:.3f} m; cells may be skipped"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    rng = np.random.default_rng(spec.seed) if spec.gps_sigma_m > 0 else None
    nn = spec.nozzle_count
    half = spec.nozzle_spacing_m / 2
    logs = {c: [] for c in LOG_COLUMNS}

    for p_idx, p in enumerate(plan.passes):
        if p.start[0] != p.end[0]:
            raise ConfigError("passes must run parallel to the cell length (world Y) axis")
        length = p.length
        ticks = max(1, math.ceil(length / d - 1e-9))
        s = np.arange(ticks) * d  # distance travelled at each tick
        times = np.arange(ticks) / spec.control_rate_hz
        y_tick = p.start[1] + p.heading * s
        left = p.centerline_x - spec.boom_width_m / 2
        x_noz = left + (np.arange(nn) + 0.5) * spec.nozzle_spacing_m
        if rng is not None:
            ex = rng.normal(0.0, spec.gps_sigma_m, ticks)[:, None]
            ey = rng.normal(0.0, spec.gps_sigma_m, ticks)[:, None]
        else:
            ex = ey = 0.0
        cmd = _lookup(maps, x_noz[None, :] + ex, y_tick[:, None] + ey, spec.default_rate)

        applied_at_tick = np.empty_like(cmd)
        for n in range(nn):
            eff_t, vals = _transitions(cmd[:, n], times, spec.default_rate, spec.on_delay, spec.off_delay)
            # applied value in effect at each tick time
            idx = np.searchsorted(eff_t, times, side="right")
            applied_at_tick[:, n] = np.concatenate(([spec.default_rate], vals))[idx]
            # paint piecewise-constant runs along the pass
            eff_s = eff_t * spec.speed_mps
            keep = eff_s < length
            bounds = np.concatenate(([0.0], eff_s[keep], [length]))
            run_vals = np.concatenate(([spec.default_rate], vals[keep]))
            c0, c1 = _cols_in(x_noz[n] - half, x_noz[n] + half, t, grid.width)
            if c0 >= c1:
                continue
            for a, b, v in zip(bounds[:-1], bounds[1:], run_vals):
                if b <= a:
                    continue
                ya, yb = p.start[1] + p.heading * a, p.start[1] + p.heading * b
                r0, r1 = _rows_in(min(ya, yb), max(ya, yb), t, grid.height)
                if r0 < r1:
                    out[r0:r1, c0:c1] = v

        if log:
            logs["time_s"].append(np.repeat(times, nn))
            logs["pass"].append(np.full(ticks * nn, p_idx))
            logs["nozzle"].append(np.tile(np.arange(nn), ticks))
            logs["x_m"].append(np.broadcast_to(x_noz[None, :] + ex, (ticks, nn)).ravel())
            logs["y_m"].append(np.broadcast_to(y_tick[:, None] + ey, (ticks, nn)).ravel())
            logs["commanded_rate"].append(cmd.ravel())
            logs["applied_rate"].append(applied_at_tick.ravel())

    log_arrays = {c: (np.concatenate(v) if v else np.empty(0)) for c, v in logs.items()}
    return AsAppliedMap(GeoRaster(out, t, np.nan), log_arrays, notes)


def rasterize_rates(rx: PrescriptionMap | Sequence[PrescriptionMap], transform: GeoTransform, shape) -> np.ndarray:
    """Prescribed rate at every pixel center (NaN outside all maps)."""
    maps = [rx] if isinstance(rx, PrescriptionMap) else list(rx)
    h, w = shape
    xc = transform.origin_x + (np.arange(w) + 0.5) * transform.pixel_size_x
    yc = transform.origin_y - (np.arange(h) + 0.5) * transform.pixel_size_y
    out = np.full((h, w), np.nan)
    for m in maps:
        i, j = m.grid.locate(xc, yc)
        ci = np.flatnonzero(i >= 0)
        rj = np.flatnonzero(j >= 0)
        if ci.size == 0 or rj.size == 0:
            continue
        block = m.rates[np.ix_(j[rj], i[ci])]
        sub = out[np.ix_(rj, ci)]
        sub = np.where(np.isnan(sub), block, sub)
        out[np.ix_(rj, ci)] = sub
    return out


def as_applied_no_spray_area(a: AsAppliedMap | GeoRaster, within=None) -> float:
    """Area (m^2) of pixels where the applied rate is 0.

    With ``within`` (a prescription or list of them) only pixels inside the
    prescriptions' no-spray cells count, which is how measured no-spray is
    compared against the expected no-spray area.
    """
    r = a.raster if isinstance(a, AsAppliedMap) else a
    plane = r.plane.astype(float)
    valid = ~np.isnan(plane)
    if r.nodata is not None and not (isinstance(r.nodata, float) and math.isnan(r.nodata)):
        valid &= plane != r.nodata
    zero = valid & (plane == 0)
    if within is not None:
        maps = [within] if isinstance(within, PrescriptionMap) else list(within)
        inside = np.zeros(plane.shape, dtype=bool)
        for m in maps:
            inside |= rasterize_rates(m, r.transform, plane.shape) == m.no_spray_rate
        zero &= inside
    return int(np.count_nonzero(zero)) * r.transform.pixel_area
