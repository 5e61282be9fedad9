import json

import numpy as np
import pytest
import tifffile
from hypothesis import given, settings
from hypothesis import strategies as st

from rowpip.errors import FormatError, GeoreferencingError, ShapeError
from rowpip.raster import (
    BinaryMask,
    Feature,
    GeoRaster,
    GeoTransform,
    mask_area,
    pixel_to_world,
    read_geojson,
    read_raster,
    sidecar_path,
    to_mask,
    world_to_pixel,
    write_geojson,
    write_raster,
)

from conftest import mask_of


def test_pixel_to_world_definitions():
    t = GeoTransform(0, 100, 0.5, 0.5)
    assert pixel_to_world(t, 0, 0) == pytest.approx((0.25, 99.75))
    t = GeoTransform(10, 10, 1, 1)
    assert pixel_to_world(t, 4, 9) == pytest.approx((14.5, 0.5))


def test_world_to_pixel_definitions():
    c, r = world_to_pixel(GeoTransform(0, 100, 0.5, 0.5), 0.25, 99.75)
    assert (c, r) == pytest.approx((0, 0))
    c, r = world_to_pixel(GeoTransform(0, 0, 1, 1), -0.5, 0.5)
    assert np.floor(c + 0.5) == -1 and np.floor(r + 0.5) == -1


@settings(max_examples=200, deadline=None)
@given(
    ox=st.floats(-1e5, 1e5), oy=st.floats(-1e5, 1e5),
    px=st.floats(1e-3, 10), c=st.integers(-10_000, 10_000), r=st.integers(-10_000, 10_000),
)
def test_round_trip_property(ox, oy, px, c, r):
    t = GeoTransform(ox, oy, px, px)
    x, y = pixel_to_world(t, c, r)
    c2, r2 = world_to_pixel(t, x, y)
    assert abs(c2 - c) * px < 1e-9 + 1e-12 * abs(ox) / px * px
    assert abs(r2 - r) * px < 1e-9 + 1e-12 * abs(oy) / px * px


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_geotransform_rejects_bad_pixel_size(bad):
    with pytest.raises(GeoreferencingError):
        GeoTransform(0, 0, bad, 1)


def test_out_of_bounds_sample_is_an_error():
    r = GeoRaster.from_array(np.zeros((2, 3), np.uint8), GeoTransform(0, 2, 1, 1))
    assert r.sample(0, 1, 2) == 0
    with pytest.raises(IndexError):
        r.sample(0, 0, 3)
    with pytest.raises(IndexError):
        r.sample(0, -1, 0)
    with pytest.raises(IndexError):
        r.sample(1, 0, 0)


def test_binary_mask_validates_values():
    with pytest.raises(Exception):
        BinaryMask.from_array(np.array([[0, 2]], np.uint8), GeoTransform(0, 1, 1, 1))


def test_geotiff_2x2_read_back(tmp_path):
    m = mask_of([[1, 0], [0, 1]], px=0.0063, origin=(0, 0))
    p = tmp_path / "a.tif"
    write_raster(m, p)
    r = read_raster(p)
    assert (r.width, r.height) == (2, 2)
    assert r.transform.pixel_size_x == 0.0063
    assert r.transform.origin_x == 0 and r.transform.origin_y == 0


def test_pgm_with_sidecar(tmp_path):
    from PIL import Image

    p = tmp_path / "z.pgm"
    Image.fromarray(np.zeros((10, 10), np.uint8)).save(p)
    sidecar_path(p).write_text(json.dumps({"origin_x": 0, "origin_y": 100, "pixel_size_x": 0.5, "pixel_size_y": 0.5}))
    r = read_raster(p)
    assert isinstance(r, BinaryMask)
    assert r.transform.origin_y == 100
    assert not r.plane.any()


def test_missing_sidecar_is_georeferencing_error(tmp_path):
    from PIL import Image

    p = tmp_path / "z.png"
    Image.fromarray(np.zeros((3, 3), np.uint8)).save(p)
    with pytest.raises(GeoreferencingError):
        read_raster(p)


def test_large_tile_round_trip_bit_identical(tmp_path, rng):
    arr = (rng.random((2000, 3000)) < 0.3).astype(np.uint8)
    m = mask_of(arr)
    p = tmp_path / "big.tif"
    write_raster(m, p)
    r = read_raster(p)
    assert np.array_equal(r.plane, arr)
    assert r.transform == m.transform


@pytest.mark.parametrize("compression", ["deflate", "none"])
def test_rgb_round_trip(tmp_path, rng, compression):
    arr = rng.integers(0, 256, (3, 17, 23), dtype=np.uint8)
    t = GeoTransform(500.0, 4000.0, 0.25, 0.25, "EPSG:32616")
    p = tmp_path / "rgb.tif"
    write_raster(GeoRaster.from_array(arr, t, nodata=0), p, compression=compression)
    r = read_raster(p)
    assert np.array_equal(r.data, arr)
    assert r.transform == t
    assert r.nodata == 0


def test_png_round_trip_writes_sidecar(tmp_path):
    m = mask_of([[0, 1, 1], [1, 0, 0]], px=0.1, origin=(3, 9))
    p = tmp_path / "m.png"
    write_raster(m, p)
    assert sidecar_path(p).exists()
    r = read_raster(p)
    assert r == m


def test_unsupported_bit_depth_names_tag(tmp_path):
    p = tmp_path / "f.tif"
    tifffile.imwrite(p, np.zeros((4, 4), np.float32))
    with pytest.raises(FormatError, match="BitsPerSample|SampleFormat"):
        read_raster(p)


def test_tiff_without_georeferencing(tmp_path):
    p = tmp_path / "plain.tif"
    tifffile.imwrite(p, np.zeros((4, 4), np.uint8))
    with pytest.raises(GeoreferencingError):
        read_raster(p)


def test_unknown_extension(tmp_path):
    p = tmp_path / "x.jpg"
    p.write_bytes(b"\xff\xd8")
    with pytest.raises(FormatError):
        read_raster(p)


def test_mask_area_examples():
    assert mask_area(mask_of(np.zeros((100, 100)))) == 0.0
    assert mask_area(mask_of(np.ones((100, 100)))) == pytest.approx(0.39690, abs=1e-9)


def test_mask_area_counting_oracle(rng):
    arr = (rng.random((57, 91)) < 0.4).astype(np.uint8)
    count = 0
    for row in arr:
        for v in row:
            count += int(v == 1)
    assert mask_area(mask_of(arr, px=0.02)) == pytest.approx(count * 0.02 * 0.02, rel=1e-12)


def test_to_mask_drops_nodata():
    r = GeoRaster.from_array(np.array([[0, 5, 255]], np.uint8), GeoTransform(0, 1, 1, 1), nodata=255)
    assert to_mask(r).plane.tolist() == [[0, 1, 0]]


def test_plane_requires_single_band():
    r = GeoRaster.from_array(np.zeros((3, 2, 2), np.uint8), GeoTransform(0, 1, 1, 1))
    with pytest.raises(ShapeError):
        r.plane


def test_geojson_empty_collection(tmp_path):
    p = tmp_path / "e.geojson"
    write_geojson([], p)
    doc = json.loads(p.read_text())
    assert doc["type"] == "FeatureCollection" and doc["features"] == []
    assert read_geojson(p)[0] == []


def test_geojson_polygon_ring_closed(tmp_path):
    p = tmp_path / "sq.geojson"
    write_geojson([Feature.polygon([(0, 0), (1, 0), (1, 1), (0, 1)], rate=15)], p, crs_label="local")
    doc = json.loads(p.read_text())
    ring = doc["features"][0]["geometry"]["coordinates"][0]
    assert ring[0] == ring[-1] and len(ring) == 5
    assert doc["features"][0]["properties"]["rate"] == 15
    feats, crs = read_geojson(p)
    assert crs == "local"
    assert feats[0].bbox() == (0, 0, 1, 1)


def test_geojson_line_round_trip(tmp_path):
    p = tmp_path / "l.geojson"
    write_geojson([Feature.line([(0.1234567, 2), (3, 4)], tile_col=2)], p)
    f = read_geojson(p)[0][0]
    assert f.coordinates[0] == (0.123457, 2.0)
    assert f.properties == {"tile_col": 2}
