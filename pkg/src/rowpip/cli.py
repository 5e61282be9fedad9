"""``rowpip`` command line: one subcommand per stage plus ``pipeline``.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataError, RowpipError
from .evaluation import (
    ApplicationReport,
    DetectionReport,
    EffectivenessReport,
    application_report,
    area_loss,
    detection_table,
    effectiveness,
    match_segments,
)
from .pipeline import (
    PipelineConfig,
    StageError,
    load_prescription,
    run_pipeline,
    stage_detect,
    stage_prescribe,
    stage_segment,
    stage_simulate,
    stage_synth,
    stage_weedmap,
)
from .raster import read_geojson, read_raster, to_mask
from .render import render_map, render_mask, render_prescription
from .rows import Orientation, PeakParams, TileSpec, segments_from_features
from .segmentation import SegmentationConfig
from .spray import MPH, SprayerSpec
from .synth import FieldRecipe, GroundTruth
from .weeds import FT, INCH, BufferConfig, GridConfig, Plot, TriggerRule

log = logging.getLogger("rowpip")


def _existing(path: str | None, flag: str) -> Path:
    if path is None:
        raise ConfigError(f"{flag} is required")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{flag}: file not found: {path}")
    return p


def _pair(text: str, flag: str, cast=float) -> tuple:
    sep = "x" if "x" in text else ","
    parts = text.split(sep)
    if len(parts) != 2:
        raise ConfigError(f"{flag}: expected two values, got {text!r}")
    try:
        return cast(parts[0]), cast(parts[1])
    except ValueError as exc:
        raise ConfigError(f"{flag}: {exc}") from exc


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("ROWPIP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"ROWPIP_THREADS must be an integer, got {env!r}") from exc
    return None


def _load_plots(path: Path) -> list[Plot]:
    feats, _ = read_geojson(path)
    if not feats:
        raise DataError(f"--plot: {path} contains no features")
    return [Plot.from_feature(f, f"P{k + 1}") for k, f in enumerate(feats)]


def _emit(report: dict, table: str, output: str | None) -> None:
    print(table)
    if output:
        Path(output).write_text(json.dumps(report, indent=2) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    obj = {}
    if args.recipe:
        try:
            obj = json.loads(_existing(args.recipe, "--recipe").read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--recipe: invalid JSON: {exc}") from exc
    if args.seed is not None:
        obj["rng_seed"] = args.seed
    recipe = FieldRecipe.from_json(obj)
    mask, truth = stage_synth(recipe, args.out_mask, args.out_truth)
    print(f"{mask.width}x{mask.height} field, {len(truth.rows)} rows, {len(truth.weeds)} weeds")
    return 0


def cmd_segment(args) -> int:
    src = _existing(args.input, "--input")
    veg = stage_segment(src, SegmentationConfig(threshold=args.threshold), args.output)
    print(f"vegetation pixels: {int(veg.plane.sum())}")
    return 0


def _peak_params(args) -> PeakParams:
    return PeakParams(
        min_distance_px=args.min_distance_px,
        row_spacing_m=args.row_spacing_m,
        line_half_width_px=args.line_half_width_px,
    )


def cmd_detect_rows(args) -> int:
    src = _existing(args.mask, "--mask")
    res = stage_detect(
        src, TileSpec.parse(args.tile), _peak_params(args), Orientation.parse(args.orientation),
        args.output_lines, args.output_segments, _threads(args),
    )
    print(f"segments: {len(res.segments)}")
    return 0


def cmd_weedmap(args) -> int:
    veg = _existing(args.veg, "--veg")
    rows = _existing(args.rows, "--rows")
    weeds = stage_weedmap(veg, rows, BufferConfig(half_width_m=args.buffer_in * INCH), args.output)
    print(f"weed area: {weeds.area:.4f} m2")
    return 0


def _grid_config(args) -> GridConfig:
    w, l = _pair(args.cell_ft, "--cell-ft")
    spray, off = _pair(args.rates, "--rates")
    return GridConfig(cell_width_m=w * FT, cell_length_m=l * FT, spray_rate=spray, no_spray_rate=off,
                      trigger_rule=TriggerRule.parse(args.rule))


def cmd_prescribe(args) -> int:
    weeds = _existing(args.weeds, "--weeds")
    plots = _load_plots(_existing(args.plot, "--plot"))
    maps = stage_prescribe(weeds, plots, _grid_config(args), args.output)
    for m in maps:
        print(f"{m.plot_id}: {int(m.sprayed.sum())} of {m.rates.size} cells sprayed")
    return 0


def _sprayer(args) -> SprayerSpec:
    return SprayerSpec(
        boom_width_m=args.boom_ft * FT,
        nozzle_spacing_m=args.nozzle_ft * FT,
        speed_mps=args.speed_mph * MPH,
        control_rate_hz=args.hz,
        actuation_delay_s=args.delay_s,
        gps_sigma_m=args.gps_sigma_m,
        seed=args.seed,
    )


def cmd_simulate(args) -> int:
    rx = _existing(args.rx, "--rx")
    maps, applied = stage_simulate(rx, _sprayer(args), args.output, args.log, args.pixel_m)
    for w in applied.warnings:
        print(f"warning: {w}", file=sys.stderr)
    rep = application_report(maps, applied)
    print(rep.table())
    return 0


def _kv_rows(items: list[str], n: int, flag: str) -> dict[str, list[float]]:
    out = {}
    for it in items:
        key, _, vals = it.partition(":")
        parts = vals.split(",")
        if not key or len(parts) != n:
            raise ConfigError(f"{flag}: expected PLOT:{','.join(['v'] * n)}, got {it!r}")
        try:
            out[key] = [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"{flag}: {exc}") from exc
    return out


def cmd_evaluate(args) -> int:
    kind = args.kind
    if kind == "detection":
        if args.counts:
            rows = {k: tuple(int(x) for x in v) for k, v in _kv_rows(args.counts, 4, "--counts").items()}
        else:
            segs = segments_from_features(read_geojson(_existing(args.segments, "--segments"))[0])
            truth = GroundTruth.load(_existing(args.truth, "--truth"))
            mr = match_segments(segs, truth.rows, truth.shape, TileSpec.parse(args.tile), truth.orientation,
                                args.tol_px)
            rows = {args.plot_id: (mr.tp, 0, mr.fp, mr.fn)}
        report, table = detection_table(rows)
        _emit(report, table, args.output)
    elif kind == "application":
        if args.values:
            rep = ApplicationReport.from_rows({k: tuple(v) for k, v in _kv_rows(args.values, 2, "--values").items()})
        else:
            maps = load_prescription(_existing(args.rx, "--rx"))
            rep = application_report(maps, read_raster(_existing(args.as_applied, "--as-applied")))
        _emit(rep.to_dict(), rep.table(), args.output)
    elif kind == "area-loss":
        if args.areas:
            rows = _kv_rows(args.areas, 2, "--areas")
            rep = area_loss({k: v[0] for k, v in rows.items()}, {k: v[1] for k, v in rows.items()})
        else:
            a = load_prescription(_existing(args.rx_a, "--rx-a"))
            b = load_prescription(_existing(args.rx_b, "--rx-b"))
            rep = area_loss(a, b)
        _emit(rep.to_dict(), rep.table(), args.output)
    else:
        if args.areas:
            per, treat = {}, {}
            for it in args.areas:
                bits = it.split(":")
                if len(bits) != 3:
                    raise ConfigError(f"--areas: expected PLOT:TREATMENT:AREA, got {it!r}")
                try:
                    per[bits[0]] = float(bits[2])
                except ValueError as exc:
                    raise ConfigError(f"--areas: {exc}") from exc
                treat[bits[0]] = bits[1]
            rep = EffectivenessReport.from_areas(per, treat, args.numerator, args.denominator)
        else:
            weeds = to_mask(read_raster(_existing(args.weeds, "--weeds")))
            plots = _load_plots(_existing(args.plot, "--plot"))
            rep = effectiveness(weeds, plots, args.numerator, args.denominator)
        _emit(rep.to_dict(), rep.table(), args.output)
    return 0


def cmd_pipeline(args) -> int:
    path = _existing(args.config, "--config")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--config: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("--config: expected a JSON object")
    if args.output_dir:
        obj["output_dir"] = str(Path(args.output_dir).resolve())
    if args.seed is not None:
        inp = obj.get("input")
        if not (isinstance(inp, dict) and "synth" in inp):
            raise ConfigError("--seed only applies to synthetic input")
        inp["synth"] = dict(inp["synth"] or {}, rng_seed=args.seed)
    cfg = PipelineConfig.from_json(obj, path.parent)
    threads = _threads(args)
    if threads is not None:
        cfg.threads = threads
    if args.no_render:
        cfg.render = False
    res = run_pipeline(cfg)
    print(res.table())
    return 0


def cmd_render(args) -> int:
    src = _existing(args.input, "--input")
    if src.suffix.lower() in (".geojson", ".json"):
        n = render_prescription(load_prescription(src), args.output, px=args.px)
        print(f"no-spray cells outlined: {n}")
        return 0
    r = read_raster(src)
    if args.overlay:
        render_mask(r, args.output, args.kind or "vegetation", overlay=read_raster(_existing(args.overlay, "--overlay")))
    else:
        render_map(r, args.output, kind=args.kind)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rowpip", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help="worker cap (fallback: ROWPIP_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic field mask and its ground truth")
    s.add_argument("--recipe")
    s.add_argument("--seed", type=int)
    s.add_argument("--out-mask", required=True)
    s.add_argument("--out-truth")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("segment", help="ExGI vegetation mask from an RGB raster")
    s.add_argument("--input", required=True)
    s.add_argument("--threshold", type=float, default=0.08)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("detect-rows", help="row lines and segments from a vegetation mask")
    s.add_argument("--mask", required=True)
    s.add_argument("--tile", default="3000x2000")
    s.add_argument("--orientation", default="horizontal")
    s.add_argument("--row-spacing-m", type=float, default=0.762)
    s.add_argument("--min-distance-px", type=int)
    s.add_argument("--line-half-width-px", type=int, default=3)
    s.add_argument("--output-lines", required=True)
    s.add_argument("--output-segments", required=True)
    s.set_defaults(func=cmd_detect_rows)

    s = sub.add_parser("weedmap", help="vegetation minus buffered rows")
    s.add_argument("--veg", required=True)
    s.add_argument("--rows", required=True)
    s.add_argument("--buffer-in", type=float, default=3.5)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_weedmap)

    s = sub.add_parser("prescribe", help="gridded prescription map from a weed mask")
    s.add_argument("--weeds", required=True)
    s.add_argument("--plot", required=True)
    s.add_argument("--cell-ft", default="1.67x10")
    s.add_argument("--rule", default="any-overlap")
    s.add_argument("--rates", default="15,0")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_prescribe)

    s = sub.add_parser("simulate", help="boom sprayer run over a prescription")
    s.add_argument("--rx", required=True)
    s.add_argument("--speed-mph", type=float, default=6.5)
    s.add_argument("--hz", type=float, default=10.0)
    s.add_argument("--delay-s", type=float, default=0.0)
    s.add_argument("--boom-ft", type=float, default=136.6)
    s.add_argument("--nozzle-ft", type=float, default=1.67)
    s.add_argument("--gps-sigma-m", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pixel-m", type=float, default=0.01)
    s.add_argument("--output", required=True)
    s.add_argument("--log")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("evaluate", help="detection / application / area-loss / effectiveness reports")
    s.add_argument("kind", choices=["detection", "application", "area-loss", "effectiveness"])
    s.add_argument("--output", help="JSON report path")
    s.add_argument("--counts", nargs="+", metavar="PLOT:TP,TN,FP,FN")
    s.add_argument("--segments")
    s.add_argument("--truth")
    s.add_argument("--tile", default="3000x2000")
    s.add_argument("--tol-px", type=float, default=3.0)
    s.add_argument("--plot-id", default="field")
    s.add_argument("--values", nargs="+", metavar="PLOT:EXPECTED,MEASURED")
    s.add_argument("--rx")
    s.add_argument("--as-applied")
    s.add_argument("--areas", nargs="+", metavar="PLOT:A,B | PLOT:TREATMENT:AREA")
    s.add_argument("--rx-a")
    s.add_argument("--rx-b")
    s.add_argument("--weeds")
    s.add_argument("--plot")
    s.add_argument("--numerator", default="SSWC")
    s.add_argument("--denominator", default="NO-SSWC")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("pipeline", help="run every stage from one JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir")
    s.add_argument("--seed", type=int)
    s.add_argument("--no-render", action="store_true")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("render", help="PNG rendering of a mask, as-applied raster or prescription")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--kind", choices=["vegetation", "weeds", "lines", "applied"])
    s.add_argument("--overlay")
    s.add_argument("--px", type=float, default=0.05)
    s.set_defaults(func=cmd_render)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"rowpip: {exc}", file=sys.stderr)
        return exc.exit_code
    except RowpipError as exc:
        print(f"rowpip: {exc}", file=sys.stderr)
        return exc.exit_code
    except ZeroDivisionError as exc:
        print(f"rowpip: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"rowpip: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
