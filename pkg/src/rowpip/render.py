"""PNG renderings of masks, line rasters, prescriptions and as-applied maps.

Palette (RGB):

====================  ===============
background / soil     (236, 229, 214)
vegetation            (34, 139, 34)
weeds                 (200, 30, 30)
detected row lines    (30, 90, 200)
spray cell fill       (60, 170, 60)
no-spray cell outline (200, 30, 30)
applied no-spray      (128, 0, 128)
applied spray         (60, 170, 60)
====================  ===============

Output depends only on the inputs, so rendering twice gives identical bytes.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .raster import GeoRaster
from .weeds import PrescriptionMap

BACKGROUND = (236, 229, 214)
VEGETATION = (34, 139, 34)
WEEDS = (200, 30, 30)
LINES = (30, 90, 200)
SPRAY_FILL = (60, 170, 60)
NO_SPRAY_OUTLINE = (200, 30, 30)
APPLIED_OFF = (128, 0, 128)
APPLIED_ON = (60, 170, 60)

_MASK_COLORS = {"vegetation": VEGETATION, "weeds": WEEDS, "lines": LINES}


def _save(rgb: np.ndarray, path) -> None:
    from PIL import Image

    try:
        Image.fromarray(rgb, mode="RGB").save(Path(path), format="PNG", optimize=False)
    except OSError as exc:
        raise DataError(f"cannot write PNG {path}: {exc}") from exc


def _downsample(plane: np.ndarray, max_side: int) -> tuple[np.ndarray, int]:
    step = max(1, math.ceil(max(plane.shape) / max_side))
    if step == 1:
        return plane, 1
    h = plane.shape[0] // step * step or plane.shape[0]
    w = plane.shape[1] // step * step or plane.shape[1]
    if h < step or w < step:
        return plane[::step, ::step], step
    blocks = plane[:h, :w].reshape(h // step, step, w // step, step)
    return blocks.max(axis=(1, 3)), step


def render_mask(mask: GeoRaster, path, kind: str = "vegetation", overlay: GeoRaster | None = None,
                max_side: int = 4096) -> None:
    """Binary mask on soil background; ``overlay`` (e.g. row lines) drawn on top."""
    color = _MASK_COLORS.get(kind, VEGETATION)
    plane, _ = _downsample(np.asarray(mask.plane != 0, dtype=np.uint8), max_side)
    rgb = np.empty(plane.shape + (3,), dtype=np.uint8)
    rgb[:] = BACKGROUND
    rgb[plane.astype(bool)] = color
    if overlay is not None:
        ov, _ = _downsample(np.asarray(overlay.plane != 0, dtype=np.uint8), max_side)
        rgb[ov.astype(bool)] = LINES
    _save(rgb, path)


def render_applied(applied: GeoRaster, path, max_side: int = 4096) -> None:
    """As-applied raster: purple where nothing was applied, green where sprayed."""
    plane = np.asarray(applied.plane, dtype=float)
    step = max(1, math.ceil(max(plane.shape) / max_side))
    plane = plane[::step, ::step]
    valid = ~np.isnan(plane)
    if applied.nodata is not None and not (isinstance(applied.nodata, float) and math.isnan(applied.nodata)):
        valid &= plane != applied.nodata
    rgb = np.empty(plane.shape + (3,), dtype=np.uint8)
    rgb[:] = BACKGROUND
    rgb[valid & (plane == 0)] = APPLIED_OFF
    rgb[valid & (plane > 0)] = APPLIED_ON
    _save(rgb, path)


def prescription_canvas(maps: Sequence[PrescriptionMap], px: float):
    """Canvas origin/size covering all maps at ``px`` meters per pixel."""
    b = [m.bounds for m in maps]
    x0, y0 = min(v[0] for v in b), min(v[1] for v in b)
    x1, y1 = max(v[2] for v in b), max(v[3] for v in b)
    w = max(1, math.ceil((x1 - x0) / px))
    h = max(1, math.ceil((y1 - y0) / px))
    return x0, y1, w, h


def render_prescription(rx: PrescriptionMap | Sequence[PrescriptionMap], path, px: float = 0.05) -> int:
    """Spray cells filled green, no-spray cells outlined red.

    Returns the number of outlined (no-spray) cells drawn.
    """
    maps = [rx] if isinstance(rx, PrescriptionMap) else list(rx)
    if not maps:
        raise DataError("nothing to render")
    ox, oy, w, h = prescription_canvas(maps, px)
    rgb = np.empty((h, w, 3), dtype=np.uint8)
    rgb[:] = BACKGROUND
    outlined = 0

    def span(lo, hi, origin, flip):
        if flip:
            a, b = (origin - hi) / px, (origin - lo) / px
        else:
            a, b = (lo - origin) / px, (hi - origin) / px
        return int(math.floor(a + 1e-9)), max(int(math.ceil(b - 1e-9)), int(math.floor(a + 1e-9)) + 1)

    for m in maps:
        xe, ye = m.grid.x_edges, m.grid.y_edges
        for j in range(m.grid.ny):
            r0, r1 = span(ye[j], ye[j + 1], oy, True)
            r0, r1 = max(r0, 0), min(r1, h)
            for i in range(m.grid.nx):
                c0, c1 = span(xe[i], xe[i + 1], ox, False)
                c0, c1 = max(c0, 0), min(c1, w)
                if r0 >= r1 or c0 >= c1:
                    continue
                if m.rates[j, i] == m.no_spray_rate:
                    rgb[r0, c0:c1] = NO_SPRAY_OUTLINE
                    rgb[r1 - 1, c0:c1] = NO_SPRAY_OUTLINE
                    rgb[r0:r1, c0] = NO_SPRAY_OUTLINE
                    rgb[r0:r1, c1 - 1] = NO_SPRAY_OUTLINE
                    outlined += 1
                else:
                    rgb[r0:r1, c0:c1] = SPRAY_FILL
    _save(rgb, path)
    return outlined


def render_map(obj, path, kind: str | None = None, **kw):
    """Dispatch on the artifact type and write a PNG to ``path``."""
    if isinstance(obj, PrescriptionMap) or (
        isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], PrescriptionMap)
    ):
        return render_prescription(obj, path, **kw)
    if hasattr(obj, "raster") and hasattr(obj, "log"):  # AsAppliedMap
        return render_applied(obj.raster, path, **kw)
    if isinstance(obj, GeoRaster):
        if kind == "applied" or obj.data.dtype.kind == "f":
            return render_applied(obj, path, **kw)
        return render_mask(obj, path, kind or "vegetation", **kw)
    raise DataError(f"cannot render object of type {type(obj).__name__}")
