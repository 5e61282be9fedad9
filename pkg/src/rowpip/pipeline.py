"""End-to-end run: segment, detect rows, map weeds, prescribe, simulate, evaluate.

Every stage reads its inputs from the files the previous stage wrote, so a
pipeline run and a sequence of individual CLI stage invocations with the
same settings produce identical artifacts.  Files are first written with a
``.partial`` suffix and renamed once their stage has finished; when a stage
fails, whatever it managed to write keeps the suffix.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, DataError, RowpipError
from .evaluation import (
    ApplicationReport,
    application_report,
    match_segments,
)
from .raster import BinaryMask, GeoRaster, read_geojson, read_raster, to_mask, write_geojson, write_raster
from .render import render_map, render_mask, render_prescription
from .rows import Orientation, PeakParams, TileSpec, detect_rows, segments_from_features
from .segmentation import SegmentationConfig, segment
from .spray import AsAppliedMap, RasterGrid, SprayerSpec, simulate
from .synth import FieldRecipe, GroundTruth, generate, truth_to_rx
from .weeds import (
    BufferConfig,
    GridConfig,
    Plot,
    buffer_rows,
    build_grid,
    no_spray_area,
    prescribe,
    prescription_from_features,
    weed_mask,
)

log = logging.getLogger(__name__)

PARTIAL = ".partial"


def _build(cls, obj, section: str):
    if obj is None:
        return cls()
    if not isinstance(obj, dict):
        raise ConfigError(f"{section}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    try:
        return cls(**obj)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


@dataclass
class PipelineConfig:
    """One JSON document describing a whole run."""

    input: dict
    output_dir: Path = Path("rowpip-out")
    truth: Path | None = None
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    tiles: TileSpec = field(default_factory=TileSpec)
    peaks: PeakParams = field(default_factory=PeakParams)
    orientation: Orientation = Orientation.HORIZONTAL
    buffer: BufferConfig = field(default_factory=BufferConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    sprayer: SprayerSpec = field(default_factory=SprayerSpec)
    sim_pixel_m: float = 0.01
    plots: list[Plot] | None = None
    threads: int | None = None
    render: bool = True

    _KEYS = {
        "input", "output_dir", "truth", "segmentation", "tiles", "peaks", "orientation",
        "buffer", "grid", "sprayer", "sim_pixel_m", "plots", "threads", "render",
    }

    @classmethod
    def from_json(cls, obj: dict, base: Path | None = None) -> "PipelineConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(obj) - cls._KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "input" not in obj:
            raise ConfigError("config needs an 'input' section")
        base = base or Path(".")
        inp = obj["input"]
        if not isinstance(inp, dict) or len(inp) != 1 or next(iter(inp)) not in ("rgb", "mask", "synth"):
            raise ConfigError("input must hold exactly one of 'rgb', 'mask' or 'synth'")
        kind, val = next(iter(inp.items()))
        if kind == "synth":
            inp = {"synth": FieldRecipe.from_json(val or {})}
        else:
            inp = {kind: base / val}

        plots = obj.get("plots")
        if isinstance(plots, str):
            feats, _ = read_geojson(base / plots)
            plots = [Plot.from_feature(f, f"P{k + 1}") for k, f in enumerate(feats)]
        elif plots is not None:
            plots = [_build(Plot, p, f"plots[{k}]") for k, p in enumerate(plots)]

        sim = obj.get("sim_pixel_m", 0.01)
        if not (isinstance(sim, (int, float)) and sim > 0):
            raise ConfigError("sim_pixel_m must be a positive number")
        threads = obj.get("threads")
        if threads is not None and (not isinstance(threads, int) or threads < 1):
            raise ConfigError("threads must be a positive integer")
        return cls(
            input=inp,
            output_dir=base / obj.get("output_dir", "rowpip-out"),
            truth=(base / obj["truth"]) if obj.get("truth") else None,
            segmentation=_build(SegmentationConfig, obj.get("segmentation"), "segmentation"),
            tiles=_build(TileSpec, obj.get("tiles"), "tiles"),
            peaks=_build(PeakParams, obj.get("peaks"), "peaks"),
            orientation=Orientation.parse(obj.get("orientation", "horizontal")),
            buffer=_build(BufferConfig, obj.get("buffer"), "buffer"),
            grid=_build(GridConfig, obj.get("grid"), "grid"),
            sprayer=_build(SprayerSpec, obj.get("sprayer"), "sprayer"),
            sim_pixel_m=float(sim),
            plots=plots,
            threads=threads,
            render=bool(obj.get("render", True)),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_json(obj, path.parent)


class StageError(RowpipError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4)


class _Outputs:
    """Collects a stage's output paths and renames them when it succeeds."""

    def __init__(self):
        self.paths: list[Path] = []

    def __call__(self, path) -> Path:
        path = Path(path)
        self.paths.append(path)
        return path.with_name(path.name + PARTIAL)

    def commit(self):
        for p in self.paths:
            tmp = p.with_name(p.name + PARTIAL)
            if tmp.exists():
                os.replace(tmp, p)
            for side in (tmp.with_name(tmp.stem + ".geo.json"),):
                if side.exists():
                    os.replace(side, p.with_name(p.stem + ".geo.json"))
        self.paths.clear()


# ---------------------------------------------------------------------------
# stages (shared by the CLI subcommands)


def stage_synth(recipe: FieldRecipe, out_mask, out_truth=None) -> tuple[BinaryMask, GroundTruth]:
    out = _Outputs()
    mask, truth = generate(recipe)
    write_raster(mask, out(out_mask))
    if out_truth is not None:
        truth.save(out(out_truth))
    out.commit()
    return mask, truth


def stage_segment(input_path, cfg: SegmentationConfig, output) -> BinaryMask:
    out = _Outputs()
    rgb = read_raster(input_path)
    veg = segment(rgb, cfg)
    write_raster(veg, out(output))
    out.commit()
    return veg


def stage_detect(mask_path, spec: TileSpec, params: PeakParams, orientation, out_lines, out_segments,
                 threads=None):
    out = _Outputs()
    mask = to_mask(read_raster(mask_path))
    res = detect_rows(mask, spec, params, orientation, threads)
    write_raster(res.line_mask, out(out_lines))
    write_geojson(res.features(), out(out_segments), mask.transform.crs_label or None)
    out.commit()
    return res


def stage_weedmap(veg_path, segments_path, cfg: BufferConfig, output, buffer_output=None) -> BinaryMask:
    out = _Outputs()
    veg = to_mask(read_raster(veg_path))
    feats, _ = read_geojson(segments_path)
    segs = segments_from_features(feats)
    buf = buffer_rows(segs, cfg, veg.shape, veg.transform)
    weeds = weed_mask(veg, buf)
    write_raster(weeds, out(output))
    if buffer_output is not None:
        write_raster(buf, out(buffer_output))
    out.commit()
    return weeds


def stage_prescribe(weeds_path, plots: Sequence[Plot], cfg: GridConfig, output):
    out = _Outputs()
    weeds = to_mask(read_raster(weeds_path))
    maps = prescribe(weeds, plots, cfg)
    feats = [f for m in maps for f in m.to_features()]
    write_geojson(feats, out(output), weeds.transform.crs_label or None)
    out.commit()
    return maps


def load_prescription(path):
    feats, _ = read_geojson(path)
    if not feats:
        raise DataError(f"prescription {path} has no cells")
    return prescription_from_features(feats)


def stage_simulate(rx_path, spec: SprayerSpec, output, log_path=None, pixel_size: float = 0.01):
    out = _Outputs()
    maps = load_prescription(rx_path)
    applied = simulate(maps, spec, pixel_size=pixel_size, log=log_path is not None)
    write_raster(applied.to_uint8(), out(output))
    if log_path is not None:
        applied.write_log(out(log_path))
    out.commit()
    return maps, applied


# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    summary: dict[str, Any]
    artifacts: dict[str, Path]

    def table(self) -> str:
        s = self.summary
        lines = [
            f"rows detected (segments)   {s['segments']}",
        ]
        if "detection" in s:
            d = s["detection"]
            lines.append(
                f"TP {d['tp']}  FP {d['fp']}  FN {d['fn']}  TN {d['tn']}  "
                f"precision {100 * d['precision']:.2f}%  accuracy {100 * d['accuracy']:.2f}%"
            )
        lines.append(f"weed area                  {s['weed_area_m2']:.3f} m2")
        lines.append(f"cells sprayed / total      {s['sprayed_cells']} / {s['total_cells']}")
        if "oracle_sprayed_cells" in s:
            lines.append(f"oracle sprayed cells       {s['oracle_sprayed_cells']}")
        lines.append(f"Rx no-spray area           {s['expected_no_spray_m2']:.3f} m2")
        lines.append(f"as-applied no-spray area   {s['measured_no_spray_m2']:.3f} m2")
        acc = s.get("application_accuracy_pct")
        lines.append("application accuracy       " + ("n/a" if acc is None else f"{acc:.2f}%"))
        return "\n".join(lines)


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Run every stage, persisting each artifact under ``cfg.output_dir``."""
    od = Path(cfg.output_dir)
    od.mkdir(parents=True, exist_ok=True)
    art = {
        "field_mask": od / "field_mask.tif",
        "truth": od / "truth.json",
        "veg_mask": od / "veg_mask.tif",
        "lines": od / "lines.tif",
        "segments": od / "segments.geojson",
        "buffer": od / "buffer.tif",
        "weeds": od / "weeds.tif",
        "rx": od / "rx.geojson",
        "as_applied": od / "as_applied.tif",
        "ticks": od / "ticks.csv",
        "report": od / "report.json",
    }

    def run(stage, fn, *a, **kw):
        log.info("stage %s", stage)
        try:
            return fn(*a, **kw)
        except RowpipError as exc:
            raise StageError(stage, exc) from exc
        except (OSError, ValueError, KeyError) as exc:
            raise StageError(stage, DataError(str(exc))) from exc

    truth = None
    kind, val = next(iter(cfg.input.items()))
    if kind == "synth":
        run("synth", stage_synth, val, art["field_mask"], art["truth"])
        veg_path = art["field_mask"]
        truth = GroundTruth.load(art["truth"])
    elif kind == "rgb":
        if not Path(val).exists():
            raise ConfigError(f"input.rgb: file not found: {val}")
        run("segment", stage_segment, val, cfg.segmentation, art["veg_mask"])
        veg_path = art["veg_mask"]
    else:
        if not Path(val).exists():
            raise ConfigError(f"input.mask: file not found: {val}")
        veg_path = Path(val)
    if cfg.truth is not None:
        truth = GroundTruth.load(cfg.truth)

    res = run("detect-rows", stage_detect, veg_path, cfg.tiles, cfg.peaks, cfg.orientation,
              art["lines"], art["segments"], cfg.threads)
    veg = to_mask(read_raster(veg_path))
    plots = cfg.plots or [Plot("P1", *veg.bounds(), treatment="SSWC")]

    weeds = run("weedmap", stage_weedmap, veg_path, art["segments"], cfg.buffer, art["weeds"], art["buffer"])
    run("prescribe", stage_prescribe, art["weeds"], plots, cfg.grid, art["rx"])
    maps, applied = run("simulate", stage_simulate, art["rx"], cfg.sprayer, art["as_applied"], art["ticks"],
                        cfg.sim_pixel_m)

    def evaluate():
        summary: dict[str, Any] = {
            "segments": len(res.segments),
            "weed_area_m2": weeds.area,
            "sprayed_cells": int(sum(int(m.sprayed.sum()) for m in maps)),
            "total_cells": int(sum(m.rates.size for m in maps)),
            "expected_no_spray_m2": no_spray_area(maps),
        }
        if truth is not None:
            mr = match_segments(res.segments, truth.rows, veg.shape, cfg.tiles, cfg.orientation,
                                cfg.peaks.line_half_width_px)
            try:
                summary["detection"] = mr.report().to_dict()
            except RowpipError:
                summary["detection"] = {"tp": mr.tp, "tn": 0, "fp": mr.fp, "fn": mr.fn,
                                        "precision": None, "accuracy": None}
            if truth.weeds is not None:
                oracle = [truth_to_rx(truth, build_grid(p, cfg.grid), veg.transform, cfg.grid) for p in plots]
                summary["oracle_sprayed_cells"] = int(sum(int(o.sprayed.sum()) for o in oracle))
        app_src = read_raster(art["as_applied"])
        rows = []
        from .spray import as_applied_no_spray_area

        measured = sum(as_applied_no_spray_area(app_src, within=m) for m in maps)
        summary["measured_no_spray_m2"] = measured
        if summary["expected_no_spray_m2"] > 0:
            rep = application_report(maps, app_src)
            summary["application_accuracy_pct"] = rep.accuracy_pct
            summary["relative_error"] = rep.relative_error
            summary["application"] = rep.to_dict()
        else:
            summary["application_accuracy_pct"] = None
        summary["warnings"] = list(applied.warnings)
        out = _Outputs()
        out(art["report"]).write_text(json.dumps(summary, indent=2, default=float) + "\n")
        out.commit()
        return summary

    summary = run("evaluate", evaluate)

    if cfg.render:
        def draw():
            out = _Outputs()
            render_mask(veg, out(od / "vegetation.png"), "vegetation", overlay=res.line_mask)
            render_mask(weeds, out(od / "weeds.png"), "weeds")
            render_prescription(maps, out(od / "rx.png"))
            render_map(applied, out(od / "as_applied.png"))
            out.commit()

        run("render", draw)
        art.update({k: od / f"{k}.png" for k in ("vegetation", "weeds")})
        art["rx_png"] = od / "rx.png"
        art["as_applied_png"] = od / "as_applied.png"

    return PipelineResult(summary, art)
