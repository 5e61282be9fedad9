import sys

import numpy as np
import pytest

from rowpip.raster import BinaryMask, GeoTransform

GSD = 0.0063


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mask_of(arr, px=GSD, origin=(0.0, None)):
    arr = np.asarray(arr, dtype=np.uint8)
    oy = origin[1] if origin[1] is not None else arr.shape[0] * px
    return BinaryMask.from_array(arr, GeoTransform(origin[0], oy, px, px))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
