"""Georeferenced raster containers, pixel/world mapping and file I/O.

Pixel indices address pixel *centers*: pixel ``(col, row)`` covers the
world rectangle ``[origin_x + col*sx, origin_x + (col+1)*sx]`` horizontally
and its center sits at ``origin_x + (col + 0.5)*sx``.  World Y decreases as
the row index grows (north-up).  Only north-up transforms are modelled.

Supported files:

* GeoTIFF, 8-bit, 1 or 3 samples per pixel, striped or tiled, uncompressed
  or deflate, georeferenced through ModelPixelScale + ModelTiepoint (or an
  axis-aligned ModelTransformation).
* PNG / PGM / PPM plus a ``<stem>.geo.json`` sidecar holding
  ``origin_x, origin_y, pixel_size_x, pixel_size_y, crs_label``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import DataError, FormatError, GeoreferencingError, ShapeError

__all__ = [
    "GeoTransform",
    "GeoRaster",
    "BinaryMask",
    "Feature",
    "pixel_to_world",
    "world_to_pixel",
    "mask_area",
    "to_mask",
    "read_raster",
    "write_raster",
    "write_geojson",
    "read_geojson",
    "sidecar_path",
]

# GeoTIFF tag ids
_PIXEL_SCALE = 33550
_TIEPOINT = 33922
_TRANSFORMATION = 34264
_GEOKEY_DIRECTORY = 34735
_GEO_ASCII = 34737
_GDAL_NODATA = 42113

_RASTER_EXTS = {".tif", ".tiff"}
_IMAGE_EXTS = {".png", ".pgm", ".ppm", ".pnm"}


@dataclass(frozen=True)
class GeoTransform:
    origin_x: float
    origin_y: float
    pixel_size_x: float
    pixel_size_y: float
    crs_label: str = ""

    def __post_init__(self):
        for name in ("pixel_size_x", "pixel_size_y"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise GeoreferencingError(f"{name} must be finite and > 0, got {v!r}")
        for name in ("origin_x", "origin_y"):
            if not math.isfinite(getattr(self, name)):
                raise GeoreferencingError(f"{name} must be finite")

    @property
    def pixel_area(self) -> float:
        return self.pixel_size_x * self.pixel_size_y

    def pixel_to_world(self, col, row):
        return pixel_to_world(self, col, row)

    def world_to_pixel(self, x, y):
        return world_to_pixel(self, x, y)

    def bounds(self, width: int, height: int) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) of a ``width`` x ``height`` grid."""
        return (
            self.origin_x,
            self.origin_y - height * self.pixel_size_y,
            self.origin_x + width * self.pixel_size_x,
            self.origin_y,
        )

    def shifted(self, col_offset: int, row_offset: int) -> "GeoTransform":
        """Transform of a window starting at (col_offset, row_offset)."""
        return replace(
            self,
            origin_x=self.origin_x + col_offset * self.pixel_size_x,
            origin_y=self.origin_y - row_offset * self.pixel_size_y,
        )

    def to_json(self) -> dict:
        return {
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "pixel_size_x": self.pixel_size_x,
            "pixel_size_y": self.pixel_size_y,
            "crs_label": self.crs_label,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GeoTransform":
        try:
            return cls(
                float(obj["origin_x"]),
                float(obj["origin_y"]),
                float(obj["pixel_size_x"]),
                float(obj["pixel_size_y"]),
                str(obj.get("crs_label", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GeoreferencingError(f"invalid geotransform record: {exc}") from exc


def pixel_to_world(t: GeoTransform, col, row):
    """World coordinates of the center of pixel ``(col, row)``.

    Works elementwise on numpy arrays; fractional indices are allowed.
    """
    x = t.origin_x + (np.asarray(col, dtype=float) + 0.5) * t.pixel_size_x
    y = t.origin_y - (np.asarray(row, dtype=float) + 0.5) * t.pixel_size_y
    if np.ndim(x) == 0:
        return float(x), float(y)
    return x, y


def world_to_pixel(t: GeoTransform, x, y):
    """Fractional ``(col, row)`` whose pixel center is at world ``(x, y)``."""
    col = (np.asarray(x, dtype=float) - t.origin_x) / t.pixel_size_x - 0.5
    row = (t.origin_y - np.asarray(y, dtype=float)) / t.pixel_size_y - 0.5
    if np.ndim(col) == 0:
        return float(col), float(row)
    return col, row


@dataclass(frozen=True, eq=False)
class GeoRaster:
    """A band-major pixel grid with a north-up geotransform.

    ``data`` has shape ``(bands, height, width)``.  Samples of file-backed
    rasters are uint8; derived rasters (ExGI, as-applied rates) may carry
    floating point samples.  The array is stored read-only.
    """

    data: np.ndarray
    transform: GeoTransform
    nodata: float | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3:
            raise ShapeError(f"raster data must be 2-D or 3-D, got shape {arr.shape}")
        if arr.shape[0] not in (1, 3):
            raise ShapeError(f"raster must have 1 or 3 bands, got {arr.shape[0]}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ShapeError(f"raster must be at least 1x1, got {arr.shape[2]}x{arr.shape[1]}")
        arr = arr.view()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr, transform: GeoTransform, nodata=None):
        """Build from ``(h, w)``, ``(bands, h, w)`` arrays."""
        return cls(np.asarray(arr), transform, nodata)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def plane(self) -> np.ndarray:
        """The single band of a 1-band raster as a 2-D array."""
        if self.bands != 1:
            raise ShapeError(f"expected 1 band, raster has {self.bands}")
        return self.data[0]

    def sample(self, band: int, row: int, col: int):
        if not (0 <= band < self.bands and 0 <= row < self.height and 0 <= col < self.width):
            raise IndexError(
                f"sample ({band}, {row}, {col}) outside raster "
                f"{self.bands}x{self.height}x{self.width}"
            )
        return self.data[band, row, col].item()

    def bounds(self) -> tuple[float, float, float, float]:
        return self.transform.bounds(self.width, self.height)

    def same_grid(self, other: "GeoRaster") -> bool:
        return self.shape == other.shape and self.transform == other.transform

    def __eq__(self, other):
        if not isinstance(other, GeoRaster):
            return NotImplemented
        return (
            self.transform == other.transform
            and self.nodata == other.nodata
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None


class BinaryMask(GeoRaster):
    """1-band raster whose samples are all 0 or 1 (uint8)."""

    def __post_init__(self):
        super().__post_init__()
        if self.bands != 1:
            raise ShapeError(f"binary mask must have 1 band, got {self.bands}")
        arr = self.data
        if arr.dtype == bool:
            arr = arr.view(np.uint8)
        elif arr.dtype != np.uint8:
            if np.any((arr != 0) & (arr != 1)):
                raise DataError("binary mask samples must be 0 or 1")
            arr = arr.astype(np.uint8)
        elif arr.size and arr.max() > 1:
            raise DataError("binary mask samples must be 0 or 1")
        arr = arr.view()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def _trusted(cls, plane: np.ndarray, transform: GeoTransform) -> "BinaryMask":
        # internal constructor for arrays already known to be 0/1 uint8
        obj = object.__new__(cls)
        arr = plane.reshape((1,) + plane.shape).view()
        arr.flags.writeable = False
        object.__setattr__(obj, "data", arr)
        object.__setattr__(obj, "transform", transform)
        object.__setattr__(obj, "nodata", None)
        return obj

    @classmethod
    def zeros(cls, height: int, width: int, transform: GeoTransform) -> "BinaryMask":
        return cls._trusted(np.zeros((height, width), np.uint8), transform)

    @property
    def area(self) -> float:
        return mask_area(self)


def to_mask(r: GeoRaster) -> BinaryMask:
    """Nonzero samples become 1; nodata samples become 0."""
    if isinstance(r, BinaryMask):
        return r
    if r.bands != 1:
        raise ShapeError(f"binary mask must have 1 band, got {r.bands}")
    plane = r.plane
    out = plane != 0
    if r.nodata is not None:
        out &= plane != r.nodata
    return BinaryMask._trusted(out.view(np.uint8), r.transform)


def mask_area(m: GeoRaster) -> float:
    """Area in square meters covered by the 1-samples of a binary mask."""
    return int(np.count_nonzero(m.plane)) * m.transform.pixel_area


# ---------------------------------------------------------------------------
# file I/O


def _ext(path: Path) -> str:
    # staged outputs carry a trailing .partial until their stage completes
    return Path(path.name.removesuffix(".partial")).suffix.lower()


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".geo.json")


def _read_sidecar(path: Path) -> GeoTransform | None:
    side = sidecar_path(path)
    if not side.exists():
        return None
    try:
        obj = json.loads(side.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise GeoreferencingError(f"unreadable sidecar {side}: {exc}") from exc
    return GeoTransform.from_json(obj)


def read_raster(path) -> GeoRaster:
    """Read a GeoTIFF or a PNG/PGM image with a ``.geo.json`` sidecar.

    1-band files whose samples are all 0/1 come back as a ``BinaryMask``.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"raster not found: {path}")
    ext = _ext(path)
    if ext in _RASTER_EXTS:
        data, transform, nodata = _read_geotiff(path)
    elif ext in _IMAGE_EXTS:
        data, transform, nodata = _read_image(path)
    else:
        raise FormatError(f"unsupported raster extension {ext!r}: {path}")
    r = GeoRaster(data, transform, nodata)
    if r.bands == 1 and nodata is None and (data.size == 0 or data.max() <= 1):
        return BinaryMask._trusted(np.ascontiguousarray(r.plane), transform)
    return r


def _read_image(path: Path):
    from PIL import Image

    transform = _read_sidecar(path)
    if transform is None:
        raise GeoreferencingError(f"no geotransform for {path}: missing {sidecar_path(path).name}")
    with Image.open(path) as im:
        if im.mode in ("1", "L", "P"):
            data = np.asarray(im.convert("L"), dtype=np.uint8)
        elif im.mode == "RGB":
            data = np.moveaxis(np.asarray(im, dtype=np.uint8), -1, 0)
        elif im.mode == "RGBA":
            data = np.moveaxis(np.asarray(im.convert("RGB"), dtype=np.uint8), -1, 0)
        else:
            raise FormatError(f"unsupported image mode {im.mode!r} (BitsPerSample) in {path}")
    return data, transform, None


def _parse_geokeys(values) -> dict[int, tuple]:
    vals = list(values)
    if len(vals) < 4:
        return {}
    n = vals[3]
    keys = {}
    for i in range(n):
        k = vals[4 + 4 * i: 8 + 4 * i]
        if len(k) == 4:
            keys[k[0]] = tuple(k[1:])
    return keys


def _read_geotiff(path: Path):
    import tifffile

    try:
        tif = tifffile.TiffFile(path)
    except (tifffile.TiffFileError, OSError, ValueError) as exc:
        raise FormatError(f"not a readable TIFF: {path}: {exc}") from exc
    with tif:
        page = tif.pages[0]
        bps = page.bitspersample
        if bps != 8:
            raise FormatError(f"BitsPerSample={bps} unsupported (only 8) in {path}")
        if page.sampleformat not in (1,):
            raise FormatError(f"SampleFormat={int(page.sampleformat)} unsupported (only unsigned) in {path}")
        comp = int(page.compression)
        if comp not in (1, 8, 32946):
            raise FormatError(
                f"Compression={comp} ({page.compression.name}) unsupported "
                f"(only none or deflate) in {path}"
            )
        spp = page.samplesperpixel
        if spp not in (1, 3):
            raise FormatError(f"SamplesPerPixel={spp} unsupported (only 1 or 3) in {path}")
        arr = page.asarray()
        if spp == 3:
            if int(page.planarconfig) == 2:
                data = arr  # already (3, h, w)
            else:
                data = np.moveaxis(arr, -1, 0)
        else:
            data = arr[np.newaxis]
        tags = page.tags
        transform = _geotransform_from_tags(tags, path)
        nodata = None
        if _GDAL_NODATA in tags:
            txt = str(tags[_GDAL_NODATA].value).strip().rstrip("\x00")
            if txt:
                nodata = float(txt)
                if nodata.is_integer():
                    nodata = int(nodata)
    if transform is None:
        transform = _read_sidecar(path)
    if transform is None:
        raise GeoreferencingError(
            f"no geotransform in {path}: ModelPixelScaleTag/ModelTiepointTag absent and no sidecar"
        )
    return np.ascontiguousarray(data), transform, nodata


def _geotransform_from_tags(tags, path) -> GeoTransform | None:
    geokeys = _parse_geokeys(tags[_GEOKEY_DIRECTORY].value) if _GEOKEY_DIRECTORY in tags else {}
    crs = ""
    if _GEO_ASCII in tags:
        crs = str(tags[_GEO_ASCII].value).split("|")[0].strip()
    if not crs:
        for key in (3072, 2048):  # ProjectedCSType, GeographicType
            if key in geokeys and geokeys[key][0] == 0:
                crs = f"EPSG:{geokeys[key][2]}"
                break
    pixel_is_point = 1025 in geokeys and geokeys[1025][2] == 2

    if _TRANSFORMATION in tags:
        m = [float(v) for v in tags[_TRANSFORMATION].value]
        if len(m) != 16:
            raise GeoreferencingError(f"malformed ModelTransformationTag in {path}")
        a, b, d, e, f, h = m[0], m[1], m[3], m[4], m[5], m[7]
        if b != 0.0 or e != 0.0:
            raise GeoreferencingError(
                f"rotated/sheared ModelTransformationTag in {path}; only north-up rasters are supported"
            )
        if a <= 0 or f >= 0:
            raise GeoreferencingError(f"ModelTransformationTag in {path} is not north-up")
        sx, sy, ox, oy = a, -f, d, h
    elif _PIXEL_SCALE in tags and _TIEPOINT in tags:
        scale = [float(v) for v in tags[_PIXEL_SCALE].value]
        tie = [float(v) for v in tags[_TIEPOINT].value]
        if len(scale) < 2 or len(tie) < 6:
            raise GeoreferencingError(f"malformed ModelPixelScaleTag/ModelTiepointTag in {path}")
        sx, sy = scale[0], scale[1]
        i, j, x, y = tie[0], tie[1], tie[3], tie[4]
        ox = x - i * sx
        oy = y + j * sy
    else:
        return None
    if pixel_is_point:
        ox -= 0.5 * sx
        oy += 0.5 * sy
    return GeoTransform(ox, oy, sx, sy, crs)


def write_raster(r: GeoRaster, path, compression: str = "deflate", tile: tuple[int, int] | None = None):
    """Write ``r`` to ``path``.

    ``.tif``/``.tiff`` produce a baseline GeoTIFF (PixelIsArea, tiepoint at the
    top-left corner).  ``.png``/``.pgm``/``.ppm`` produce an image plus a
    ``.geo.json`` sidecar.  Samples must be uint8.
    """
    path = Path(path)
    data = r.data
    if data.dtype == bool:
        data = data.view(np.uint8)
    if data.dtype != np.uint8:
        raise FormatError(f"BitsPerSample: only 8-bit rasters can be written, got {data.dtype}")
    ext = _ext(path)
    try:
        if ext in _RASTER_EXTS:
            _write_geotiff(data, r.transform, r.nodata, path, compression, tile)
        elif ext in _IMAGE_EXTS:
            _write_image(data, r.transform, path)
        else:
            raise FormatError(f"unsupported raster extension {ext!r}: {path}")
    except OSError as exc:
        raise DataError(f"cannot write raster {path}: {exc}") from exc


def _write_geotiff(data, t: GeoTransform, nodata, path, compression, tile):
    import tifffile

    if compression not in ("deflate", "none", None):
        raise FormatError(f"Compression={compression!r} unsupported (only deflate or none)")
    crs = t.crs_label or ""
    ascii_params = crs + "|"
    geokeys = [
        1, 1, 0, 3,
        1024, 0, 1, 1,  # GTModelType = projected
        1025, 0, 1, 1,  # GTRasterType = PixelIsArea
        1026, _GEO_ASCII, len(ascii_params), 0,  # GTCitation -> ascii params
    ]
    extratags = [
        (_PIXEL_SCALE, "d", 3, (t.pixel_size_x, t.pixel_size_y, 0.0), True),
        (_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0), True),
        (_GEOKEY_DIRECTORY, "H", len(geokeys), geokeys, True),
        (_GEO_ASCII, "s", 0, ascii_params, True),
    ]
    if nodata is not None:
        extratags.append((_GDAL_NODATA, "s", 0, f"{nodata:g}", True))
    if data.shape[0] == 3:
        arr = np.moveaxis(data, 0, -1)
        photometric = "rgb"
    else:
        arr = data[0]
        photometric = "minisblack"
    tifffile.imwrite(
        path,
        np.ascontiguousarray(arr),
        photometric=photometric,
        compression="zlib" if compression == "deflate" else None,
        tile=tile,
        extratags=extratags,
        metadata=None,
    )


def _write_image(data, t: GeoTransform, path: Path):
    from PIL import Image

    if data.shape[0] == 3:
        im = Image.fromarray(np.ascontiguousarray(np.moveaxis(data, 0, -1)), mode="RGB")
    else:
        im = Image.fromarray(np.ascontiguousarray(data[0]), mode="L")
    im.save(path)
    sidecar_path(path).write_text(json.dumps(t.to_json(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# GeoJSON


@dataclass
class Feature:
    """A Polygon or LineString feature in projected world coordinates.

    Polygon ``coordinates`` is a list of rings; LineString a list of points.
    """

    geometry_type: str
    coordinates: list
    properties: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def polygon(cls, ring: Sequence[Sequence[float]], **properties) -> "Feature":
        ring = [tuple(map(float, p)) for p in ring]
        if ring and ring[0] != ring[-1]:
            ring.append(ring[0])
        return cls("Polygon", [ring], properties)

    @classmethod
    def rectangle(cls, x0, y0, x1, y1, **properties) -> "Feature":
        # counter-clockwise exterior ring per RFC 7946
        return cls.polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], **properties)

    @classmethod
    def line(cls, points: Sequence[Sequence[float]], **properties) -> "Feature":
        return cls("LineString", [tuple(map(float, p)) for p in points], properties)

    def bbox(self) -> tuple[float, float, float, float]:
        pts = self.coordinates[0] if self.geometry_type == "Polygon" else self.coordinates
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        return min(xs), min(ys), max(xs), max(ys)


def _fmt(v: float, decimals: int) -> str:
    s = f"{v:.{decimals}f}"
    if s.startswith("-") and float(s) == 0.0:
        s = s[1:]
    return s


def _point(p, decimals):
    return "[" + ", ".join(_fmt(c, decimals) for c in p) + "]"


def write_geojson(features: Iterable[Feature], path, crs_label: str | None = None, decimals: int = 6):
    """Write a FeatureCollection with fixed-precision coordinates."""
    path = Path(path)
    parts = []
    for f in features:
        if f.geometry_type == "Polygon":
            coords = "[" + ", ".join(
                "[" + ", ".join(_point(p, decimals) for p in ring) + "]" for ring in f.coordinates
            ) + "]"
        elif f.geometry_type == "LineString":
            coords = "[" + ", ".join(_point(p, decimals) for p in f.coordinates) + "]"
        else:
            raise FormatError(f"unsupported geometry type {f.geometry_type!r}")
        parts.append(
            '{"type": "Feature", "geometry": {"type": "%s", "coordinates": %s}, "properties": %s}'
            % (f.geometry_type, coords, json.dumps(f.properties, sort_keys=True))
        )
    head = '{"type": "FeatureCollection"'
    if crs_label:
        head += ', "crs_label": ' + json.dumps(crs_label)
    text = head + ', "features": [' + (
        "\n  " + ",\n  ".join(parts) + "\n" if parts else ""
    ) + "]}\n"
    try:
        path.write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write GeoJSON {path}: {exc}") from exc


def read_geojson(path) -> tuple[list[Feature], str | None]:
    """Parse a FeatureCollection written by :func:`write_geojson` (or similar)."""
    path = Path(path)
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"GeoJSON not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"invalid GeoJSON {path}: {exc}") from exc
    if obj.get("type") != "FeatureCollection":
        raise FormatError(f"{path}: expected a FeatureCollection")
    out = []
    for feat in obj.get("features", []):
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            coords = [[tuple(p) for p in ring] for ring in geom["coordinates"]]
        elif gtype == "LineString":
            coords = [tuple(p) for p in geom["coordinates"]]
        else:
            raise FormatError(f"{path}: unsupported geometry type {gtype!r}")
        out.append(Feature(gtype, coords, dict(feat.get("properties") or {})))
    return out, obj.get("crs_label")
