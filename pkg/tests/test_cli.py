import json
import subprocess
import sys

import numpy as np
import pytest

from rowpip.cli import main
from rowpip.errors import DataError
from rowpip.pipeline import PipelineConfig, run_pipeline
from rowpip.raster import Feature, GeoRaster, GeoTransform, read_raster, write_geojson, write_raster
from rowpip.spray import AsAppliedMap

SMALL = {"width_px": 3000, "height_px": 1300, "rng_seed": 0}
PLOT = {"plot_id": "A", "min_x": 0.0, "min_y": 0.0, "max_x": 18.9, "max_y": 8.19, "treatment": "SSWC"}


def write_cfg(tmp_path, **over):
    cfg = {"input": {"synth": dict(SMALL)}, "output_dir": "out", "plots": [PLOT], "render": False}
    cfg.update(over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_help_lists_all_subcommands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    text = capsys.readouterr().out
    for cmd in ("synth", "segment", "detect-rows", "weedmap", "prescribe", "simulate", "evaluate", "pipeline", "render"):
        assert cmd in text


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "rowpip.cli", "evaluate", "detection", "--counts", "T:2313,0,15,8"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "precision 99.36%  accuracy 99.02%" in out.stdout


def test_missing_input_names_flag(tmp_path, capsys):
    rc = main(["segment", "--input", str(tmp_path / "nope.tif"), "--output", str(tmp_path / "o.tif")])
    assert rc == 2
    assert "--input" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert main(["pipeline", "--config", str(tmp_path / "none.json")]) == 2
    assert "--config" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    p = write_cfg(tmp_path, colour="blue")
    assert main(["pipeline", "--config", str(p)]) == 2
    assert "colour" in capsys.readouterr().err


def test_invalid_subconfig_value(tmp_path):
    p = write_cfg(tmp_path, segmentation={"threshold": 3})
    assert main(["pipeline", "--config", str(p)]) == 2


def test_missing_mask_input_in_config(tmp_path, capsys):
    p = write_cfg(tmp_path, input={"mask": "absent.tif"})
    assert main(["pipeline", "--config", str(p)]) == 2
    assert "input.mask" in capsys.readouterr().err


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "bad.geojson"
    bad.write_text("{not json")
    assert main(["render", "--input", str(bad), "--output", str(tmp_path / "x.png")]) == 3


def test_zero_weeds_all_no_spray_full_accuracy(tmp_path, capsys):
    p = write_cfg(tmp_path)
    assert main(["pipeline", "--config", str(p)]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["sprayed_cells"] == 0
    assert rep["application_accuracy_pct"] == pytest.approx(100, abs=2)
    assert rep["detection"]["fp"] == 0 and rep["detection"]["fn"] == 0
    assert "application accuracy" in capsys.readouterr().out


def test_weedy_field_matches_oracle(tmp_path):
    synth = dict(SMALL, weed_count=50, rng_seed=9)
    p = write_cfg(tmp_path, input={"synth": synth})
    assert main(["pipeline", "--config", str(p)]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["sprayed_cells"] > 0
    assert rep["sprayed_cells"] == rep["oracle_sprayed_cells"]


def test_seed_flag_overrides_config(tmp_path):
    p = write_cfg(tmp_path)
    assert main(["pipeline", "--config", str(p), "--seed", "4", "--output-dir", str(tmp_path / "o4")]) == 0
    truth = json.loads((tmp_path / "o4" / "truth.json").read_text())
    ref = subprocess.run([sys.executable, "-m", "rowpip.cli", "synth", "--seed", "4", "--recipe", str(_recipe(tmp_path)),
                          "--out-mask", str(tmp_path / "m.tif"), "--out-truth", str(tmp_path / "t.json")], capture_output=True)
    assert ref.returncode == 0
    assert json.loads((tmp_path / "t.json").read_text()) == truth


def _recipe(tmp_path):
    p = tmp_path / "recipe.json"
    p.write_text(json.dumps({k: v for k, v in SMALL.items() if k != "rng_seed"}))
    return p


def test_stage_composition_is_deterministic(tmp_path):
    synth = dict(SMALL, weed_count=30, rng_seed=5, plant_dropout_prob=0.2)
    cfg = write_cfg(tmp_path, input={"synth": synth})
    assert main(["pipeline", "--config", str(cfg)]) == 0
    out = tmp_path / "out"

    s = tmp_path / "stages"
    s.mkdir()
    recipe = s / "recipe.json"
    recipe.write_text(json.dumps(synth))
    plot = s / "plot.geojson"
    write_geojson([Feature.rectangle(0.0, 0.0, 18.9, 8.19, plot_id="A", treatment="SSWC")], plot)
    steps = [
        ["synth", "--recipe", recipe, "--out-mask", s / "field_mask.tif", "--out-truth", s / "truth.json"],
        ["detect-rows", "--mask", s / "field_mask.tif", "--tile", "3000x2000", "--orientation", "horizontal",
         "--row-spacing-m", "0.762", "--output-lines", s / "lines.tif", "--output-segments", s / "segments.geojson"],
        ["weedmap", "--veg", s / "field_mask.tif", "--rows", s / "segments.geojson", "--buffer-in", "3.5",
         "--output", s / "weeds.tif"],
        ["prescribe", "--weeds", s / "weeds.tif", "--plot", plot, "--cell-ft", "1.67x10", "--rule", "any-overlap",
         "--rates", "15,0", "--output", s / "rx.geojson"],
        ["simulate", "--rx", s / "rx.geojson", "--speed-mph", "6.5", "--hz", "10", "--delay-s", "0",
         "--boom-ft", "136.6", "--nozzle-ft", "1.67", "--output", s / "as_applied.tif", "--log", s / "ticks.csv"],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv
    for name in ("field_mask.tif", "truth.json", "lines.tif", "segments.geojson", "weeds.tif", "rx.geojson",
                 "as_applied.tif", "ticks.csv"):
        assert (out / name).read_bytes() == (s / name).read_bytes(), name


def test_failed_stage_leaves_partial_files(tmp_path, monkeypatch, capsys):
    def boom(self, path):
        raise DataError("disk full")

    monkeypatch.setattr(AsAppliedMap, "write_log", boom)
    p = write_cfg(tmp_path)
    assert main(["pipeline", "--config", str(p)]) == 3
    out = tmp_path / "out"
    assert "simulate" in capsys.readouterr().err
    assert (out / "as_applied.tif.partial").exists()
    assert not (out / "as_applied.tif").exists()
    assert (out / "rx.geojson").exists()


def test_rgb_input_runs_segmentation(tmp_path):
    rng = np.random.default_rng(0)
    arr = np.zeros((3, 400, 600), np.uint8)
    arr[:] = np.array([120, 100, 90], np.uint8)[:, None, None]
    for y in (60, 181, 302):
        arr[:, y - 5:y + 6, :] = np.array([40, 160, 40], np.uint8)[:, None, None]
    write_raster(GeoRaster.from_array(arr, GeoTransform(0, 400 * 0.0063, 0.0063, 0.0063)), tmp_path / "rgb.tif")
    p = write_cfg(tmp_path, input={"rgb": "rgb.tif"}, plots=None, render=True)
    assert main(["pipeline", "--config", str(p)]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["segments"] == 3
    assert (tmp_path / "out" / "veg_mask.tif").exists()
    assert (tmp_path / "out" / "rx.png").exists()


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("ROWPIP_THREADS", "2")
    assert main(["synth", "--seed", "1", "--out-mask", str(tmp_path / "m.tif")]) == 0
    rc = main(["detect-rows", "--mask", str(tmp_path / "m.tif"), "--output-lines", str(tmp_path / "l.tif"),
               "--output-segments", str(tmp_path / "s.geojson")])
    assert rc == 0
    monkeypatch.setenv("ROWPIP_THREADS", "many")
    rc = main(["detect-rows", "--mask", str(tmp_path / "m.tif"), "--output-lines", str(tmp_path / "l.tif"),
               "--output-segments", str(tmp_path / "s.geojson")])
    assert rc == 2


@pytest.mark.parametrize(
    "argv, needle",
    [
        (["evaluate", "detection", "--counts", "P1:2313,0,15,8"], "precision 99.36%"),
        (["evaluate", "application", "--values", "TOTAL:10098.1,7919.5"], "accuracy 78.4%"),
        (["evaluate", "area-loss", "--areas", "TOTAL:13956.7,7919.5"], "6037.2"),
        (["evaluate", "effectiveness", "--areas", "a:SSWC:87.02", "b:NO-SSWC:25.5"], "= 3.41"),
    ],
)
def test_evaluate_literal_inputs(argv, needle, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(argv + ["--output", str(out)]) == 0
    assert needle in capsys.readouterr().out
    json.loads(out.read_text())


def test_evaluate_from_files(tmp_path, capsys):
    cfg = write_cfg(tmp_path, input={"synth": dict(SMALL, weed_count=20)})
    assert main(["pipeline", "--config", str(cfg)]) == 0
    o = tmp_path / "out"
    assert main(["evaluate", "detection", "--segments", str(o / "segments.geojson"), "--truth", str(o / "truth.json")]) == 0
    assert main(["evaluate", "application", "--rx", str(o / "rx.geojson"), "--as-applied", str(o / "as_applied.tif")]) == 0
    assert main(["evaluate", "area-loss", "--rx-a", str(o / "rx.geojson"), "--rx-b", str(o / "rx.geojson")]) == 0
    plot = tmp_path / "plots.geojson"
    write_geojson([Feature.rectangle(0, 0, 9, 8.19, plot_id="L", treatment="SSWC"),
                   Feature.rectangle(9, 0, 18.9, 8.19, plot_id="R", treatment="NO-SSWC")], plot)
    assert main(["evaluate", "effectiveness", "--weeds", str(o / "weeds.tif"), "--plot", str(plot)]) == 0
    assert "ratio SSWC/NO-SSWC" in capsys.readouterr().out


def test_segment_and_render_commands(tmp_path):
    arr = np.zeros((3, 20, 30), np.uint8)
    arr[1, 5:10] = 200
    write_raster(GeoRaster.from_array(arr, GeoTransform(0, 2, 0.1, 0.1)), tmp_path / "rgb.tif")
    assert main(["segment", "--input", str(tmp_path / "rgb.tif"), "--output", str(tmp_path / "veg.tif")]) == 0
    assert read_raster(tmp_path / "veg.tif").plane[5:10].all()
    assert main(["render", "--input", str(tmp_path / "veg.tif"), "--output", str(tmp_path / "veg.png")]) == 0
    assert (tmp_path / "veg.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_run_pipeline_api(tmp_path):
    cfg = PipelineConfig.from_json({"input": {"synth": dict(SMALL)}, "output_dir": str(tmp_path / "api"),
                                    "render": False, "sprayer": {"control_rate_hz": 20.0}})
    res = run_pipeline(cfg)
    assert res.summary["segments"] == 10
    assert res.artifacts["rx"].exists()
    assert "cells sprayed" in res.table()
