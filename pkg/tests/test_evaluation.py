import json

import numpy as np
import pytest

from rowpip.errors import DataError, UndefinedMetricError
from rowpip.evaluation import (
    ApplicationReport,
    DetectionReport,
    EffectivenessReport,
    application_accuracy,
    application_report,
    area_loss,
    detection_table,
    effectiveness,
    match_segments,
    plot_mask_area,
    precision_accuracy,
)
from rowpip.raster import BinaryMask, GeoTransform
from rowpip.rows import Orientation, RowSegment, TileSpec, detect_rows
from rowpip.spray import SprayerSpec, simulate
from rowpip.synth import FieldRecipe, generate
from rowpip.weeds import GridConfig, Plot, PrescriptionMap, build_grid

# per-plot no-spray areas (m^2) from a six-plot field trial
ARCGIS = {"SSWC-1": 2598.6, "SSWC-2": 3316.9, "SSWC-3": 2302.3, "SSWC-4": 1739.2, "SSWC-5": 2241.8, "SSWC-6": 1757.8}
RX = {"SSWC-1": 1822.3, "SSWC-2": 2648.9, "SSWC-3": 1591.2, "SSWC-4": 1182.3, "SSWC-5": 1688.9, "SSWC-6": 1164.5}
APPLIED = {"SSWC-1": 1600.1, "SSWC-2": 2209.1, "SSWC-3": 1146.1, "SSWC-4": 841.8, "SSWC-5": 1280.7, "SSWC-6": 841.8}
LOSS = {"SSWC-1": (998.6, 38.4), "SSWC-2": (1107.8, 33.4), "SSWC-3": (1156.3, 50.2), "SSWC-4": (897.4, 51.6),
        "SSWC-5": (961.2, 42.9), "SSWC-6": (915.9, 52.1)}
SPRAYED_IN = {"SSWC-1": (222.2, 12.2), "SSWC-2": (439.8, 16.6), "SSWC-3": (445.1, 27.9), "SSWC-4": (340.5, 28.8),
              "SSWC-5": (408.3, 24.2), "SSWC-6": (322.7, 27.7)}


def test_precision_accuracy_trial_totals():
    p, a = precision_accuracy(2313, 0, 15, 8)
    assert p == pytest.approx(0.99356, abs=1e-4)
    assert a == pytest.approx(0.99016, abs=1e-4)


def test_precision_accuracy_small():
    assert precision_accuracy(1, 0, 1, 0) == (0.5, 0.5)


def test_precision_accuracy_undefined():
    with pytest.raises(UndefinedMetricError):
        precision_accuracy(0, 0, 0, 0)
    with pytest.raises(ZeroDivisionError):
        precision_accuracy(0, 0, 0, 3)


def test_detection_table_layout():
    report, table = detection_table({"A": (10, 0, 1, 0), "B": (5, 0, 0, 2)})
    assert report["total"]["tp"] == 15 and report["total"]["fn"] == 2
    lines = table.splitlines()
    assert lines[0].split() == ["Test-Plot", "TP", "TN", "FP", "FN"]
    assert lines[3].split() == ["TOTAL", "15", "0", "1", "2"]
    assert len({len(l) for l in lines[:4]}) == 1
    json.dumps(report)


def test_recall():
    assert DetectionReport.from_counts(9, 0, 1).recall == pytest.approx(0.9)


def test_application_accuracy_examples():
    acc, rel = application_accuracy(10098.1, 7919.5)
    assert acc == pytest.approx(78.4, abs=0.1) and rel == pytest.approx(-0.216, abs=1e-3)
    assert application_accuracy(5.0, 5.0) == (100.0, 0.0)
    assert application_accuracy(1182.3, 841.8)[0] == pytest.approx(71.2, abs=0.1)
    with pytest.raises(UndefinedMetricError):
        application_accuracy(0.0, 1.0)


def test_application_report_rows():
    rep = ApplicationReport.from_rows({k: (RX[k], APPLIED[k]) for k in RX})
    for row in rep.per_plot:
        d, pct = SPRAYED_IN[row.plot_id]
        assert row.sprayed_in_no_spray_m2 == pytest.approx(d, abs=0.15)
        assert row.pct == pytest.approx(pct, abs=0.1)
    assert rep.expected_no_spray_m2 == pytest.approx(10098.1, abs=0.05)
    # the per-plot rows are rounded, so they sum to 7919.6 rather than 7919.5
    assert rep.measured_no_spray_m2 == pytest.approx(7919.5, abs=0.15)
    assert rep.accuracy_pct == pytest.approx(78.4, abs=0.1)
    assert "TOTAL" in rep.table()


def test_area_loss_totals_and_rows():
    total = area_loss({"TOTAL": 13956.7}, {"TOTAL": 7919.5}).total
    assert total.loss_m2 == pytest.approx(6037.2, abs=0.15)
    assert total.loss_pct == pytest.approx(43.3, abs=0.1)
    rep = area_loss(ARCGIS, APPLIED)
    # rows are rounded to 0.1 m^2, so their sums drift by up to 0.1 each
    assert rep.total.loss_m2 == pytest.approx(6037.2, abs=0.25)
    for row in rep.per_plot:
        loss, pct = LOSS[row.plot_id]
        assert row.loss_m2 == pytest.approx(loss, abs=0.15)
        assert row.loss_pct == pytest.approx(pct, abs=0.15)


def test_area_loss_identity_and_mismatch():
    rep = area_loss(ARCGIS, ARCGIS)
    assert rep.total.loss_m2 == 0 and rep.total.loss_pct == 0
    with pytest.raises(DataError, match="SSWC-6"):
        area_loss(ARCGIS, {k: v for k, v in APPLIED.items() if k != "SSWC-6"})


def test_area_loss_from_maps():
    g = build_grid(Plot("p", 0, 0, 2, 2), GridConfig(1, 1))
    a = PrescriptionMap(g, np.zeros((2, 2)))
    b = PrescriptionMap(g, np.array([[0.0, 15.0], [15.0, 15.0]]))
    rep = area_loss([a], [b])
    assert rep.total.loss_m2 == pytest.approx(3.0) and rep.total.loss_pct == pytest.approx(75.0)


def test_effectiveness_ratio():
    rep = EffectivenessReport.from_areas({"a": 50.0, "b": 37.02, "c": 25.5}, {"a": "SSWC", "b": "SSWC", "c": "NO-SSWC"})
    assert rep.ratio == pytest.approx(3.41, abs=0.02)
    same = EffectivenessReport.from_areas({"a": 4.0, "b": 4.0}, {"a": "SSWC", "b": "NO-SSWC"})
    assert same.ratio == 1.0


def test_effectiveness_missing_treatment():
    with pytest.raises(DataError):
        EffectivenessReport.from_areas({"a": 1.0}, {"a": "SSWC"})


def test_effectiveness_counts_pixels_per_plot(rng):
    t = GeoTransform(0.0, 2.0, 0.1, 0.1)
    arr = (rng.random((20, 40)) < 0.2).astype(np.uint8)
    m = BinaryMask.from_array(arr, t)
    plots = [Plot("w", 0, 0, 2, 2, "SSWC"), Plot("e", 2, 0, 4, 2, "NO-SSWC")]
    rep = effectiveness(m, plots)
    assert rep.per_plot["w"] == pytest.approx(arr[:, :20].sum() * 0.01)
    assert rep.per_plot["e"] == pytest.approx(arr[:, 20:].sum() * 0.01)
    assert plot_mask_area(m, plots[0]) == rep.per_plot["w"]


def _seg(peak, span=(0, 99)):
    return RowSegment(0, 0, peak, span, (0.0, 0.0), (0.0, 0.0), Orientation.HORIZONTAL)


def _row_at(y, w=100):
    return np.array([[0.0, y], [w - 1.0, y]])


def test_match_exact():
    rows = [_row_at(20), _row_at(60)]
    r = match_segments([_seg(20), _seg(60)], rows, (100, 100), TileSpec(100, 100))
    assert (r.tp, r.fp, r.fn) == (2, 0, 0)


def test_match_double_line_over_one_row():
    r = match_segments([_seg(48), _seg(52)], [_row_at(50)], (100, 100), TileSpec(100, 100), tol_px=3)
    assert (r.tp, r.fp, r.fn) == (1, 1, 0)


def test_match_nothing_detected():
    r = match_segments([], [_row_at(50)], (100, 100), TileSpec(100, 100))
    assert (r.tp, r.fp, r.fn) == (0, 0, 1)


def test_match_outside_tolerance():
    r = match_segments([_seg(55)], [_row_at(50)], (100, 100), TileSpec(100, 100), tol_px=3)
    assert (r.tp, r.fp, r.fn) == (0, 1, 1)


def test_match_on_synthetic_field():
    mask, truth = generate(FieldRecipe(width_px=6000, height_px=2000, rng_seed=5))
    res = detect_rows(mask)
    r = match_segments(res.segments, truth.rows, mask.shape)
    assert r.fp == 0 and r.fn == 0 and r.tp == len(res.segments)


def test_application_report_from_simulation():
    g = build_grid(Plot("p", 0, 0, 41.636, 30.48))
    rates = np.full((g.ny, g.nx), 15.0)
    rates[2:5, 10:20] = 0.0
    rx = PrescriptionMap(g, rates)
    a = simulate(rx, SprayerSpec(control_rate_hz=100), pixel_size=0.02, log=False)
    rep = application_report([rx], a)
    assert rep.accuracy_pct == pytest.approx(100, abs=2)


def test_detection_table_six_plots():
    per_plot = {"SSWC-1": (392, 0, 3, 1), "SSWC-2": (382, 0, 1, 3), "SSWC-3": (386, 0, 4, 0),
                "SSWC-4": (385, 0, 2, 1), "SSWC-5": (384, 0, 4, 2), "SSWC-6": (384, 0, 1, 1)}
    report, table = detection_table(per_plot)
    t = report["total"]
    assert (t["tp"], t["tn"], t["fp"], t["fn"]) == (2313, 0, 15, 8)
    assert t["precision"] == pytest.approx(0.99356, abs=1e-4)
    assert "TOTAL" in table.splitlines()[-2]
