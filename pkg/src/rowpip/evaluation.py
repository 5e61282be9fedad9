"""Detection, prescription and application metrics.

Each report renders as JSON (``to_dict``) and as an aligned plain-text table
(``table``) laid out like the per-plot tables of a field trial write-up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, UndefinedMetricError
from .raster import BinaryMask, GeoRaster
from .rows import Orientation, RowSegment, TileSpec
from .spray import AsAppliedMap, as_applied_no_spray_area
from .weeds import Plot, PrescriptionMap, no_spray_area


def precision_accuracy(tp: int, tn: int, fp: int, fn: int) -> tuple[float, float]:
    """precision = TP/(TP+FP); accuracy = (TP+TN)/(TP+FN+TN+FP)."""
    if min(tp, tn, fp, fn) < 0:
        raise DataError("confusion counts must be >= 0")
    if tp + fp == 0:
        raise UndefinedMetricError("precision undefined: TP + FP = 0")
    total = tp + fn + tn + fp
    if total == 0:
        raise UndefinedMetricError("accuracy undefined: all counts are 0")
    return tp / (tp + fp), (tp + tn) / total


@dataclass(frozen=True)
class DetectionReport:
    tp: int
    tn: int
    fp: int
    fn: int
    precision: float
    accuracy: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int = 0) -> "DetectionReport":
        p, a = precision_accuracy(tp, tn, fp, fn)
        return cls(tp, tn, fp, fn, p, a)

    @property
    def recall(self) -> float:
        if self.tp + self.fn == 0:
            raise UndefinedMetricError("recall undefined: TP + FN = 0")
        return self.tp / (self.tp + self.fn)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "accuracy": self.accuracy,
        }


def detection_table(per_plot: Mapping[str, tuple[int, int, int, int]]) -> tuple[dict, str]:
    """Per-plot (tp, tn, fp, fn) counts plus a TOTAL row.

    Returns the JSON-ready report and the text table.
    """
    rows = []
    tot = np.zeros(4, dtype=int)
    for pid, counts in per_plot.items():
        tot += np.asarray(counts, dtype=int)
        rows.append((pid, *map(int, counts)))
    total = DetectionReport.from_counts(int(tot[0]), int(tot[2]), int(tot[3]), int(tot[1]))
    lines = [_row(("Test-Plot", "TP", "TN", "FP", "FN"), (10, 6, 6, 6, 6))]
    for r in rows:
        lines.append(_row(r, (10, 6, 6, 6, 6)))
    lines.append(_row(("TOTAL", total.tp, total.tn, total.fp, total.fn), (10, 6, 6, 6, 6)))
    lines.append(f"precision {100 * total.precision:.2f}%  accuracy {100 * total.accuracy:.2f}%")
    report = {
        "plots": {r[0]: dict(zip(("tp", "tn", "fp", "fn"), r[1:])) for r in rows},
        "total": total.to_dict(),
    }
    return report, "\n".join(lines)


def _row(values, widths) -> str:
    out = []
    for k, (v, w) in enumerate(zip(values, widths)):
        s = f"{v:.1f}" if isinstance(v, float) else str(v)
        out.append(s.ljust(w) if k == 0 else s.rjust(w))
    return "  ".join(out)


# ---------------------------------------------------------------------------
# row matching


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (truth span idx, segment idx)

    def report(self) -> DetectionReport:
        return DetectionReport.from_counts(self.tp, self.fp, self.fn)


def _truth_spans(truth_rows, shape, spec: TileSpec, orientation: Orientation):
    """Per-tile pieces of each truth centerline.

    Yields (row index, along start, along positions, cross values).
    """
    h, w = shape
    horizontal = orientation is Orientation.HORIZONTAL
    along_len, cross_len = (w, h) if horizontal else (h, w)
    along_tile, cross_tile = (spec.tile_width, spec.tile_height) if horizontal else (spec.tile_height, spec.tile_width)
    spans = []
    for ridx, pts in enumerate(truth_rows):
        pts = np.asarray(pts, dtype=float)
        a_pts, c_pts = (pts[:, 0], pts[:, 1]) if horizontal else (pts[:, 1], pts[:, 0])
        order = np.argsort(a_pts)
        a_pts, c_pts = a_pts[order], c_pts[order]
        for a0 in range(0, along_len, along_tile):
            a = np.arange(a0, min(a0 + along_tile, along_len), dtype=float)
            ok = (a >= a_pts[0]) & (a <= a_pts[-1])
            if not ok.any():
                continue
            a = a[ok]
            c = np.interp(a, a_pts, c_pts)
            band = np.floor(np.clip(np.round(c), 0, cross_len - 1) / cross_tile).astype(int)
            for b in np.unique(band):
                sel = band == b
                spans.append((ridx, a0, a[sel], c[sel]))
    return spans


def match_segments(
    detected: Sequence[RowSegment],
    truth_rows: Sequence,
    shape: tuple[int, int],
    spec: TileSpec | None = None,
    orientation=Orientation.HORIZONTAL,
    tol_px: float = 3.0,
    min_fraction: float = 0.5,
) -> MatchResult:
    """Count TP/FP/FN by matching detected segments to truth centerlines.

    Each truth row is cut into per-tile spans.  A detected segment in the
    same along-row tile range is a candidate for a span when its peak lies
    within ``tol_px`` of the centerline on at least ``min_fraction`` of the
    span.  Pairs are accepted greedily, best coverage first then smallest
    mean offset; each span and each segment is used at most once.
    """
    spec = spec or TileSpec()
    orientation = Orientation.parse(orientation)
    spans = _truth_spans(truth_rows, shape, spec, orientation)
    by_start: dict[int, list[int]] = {}
    for k, s in enumerate(detected):
        by_start.setdefault(s.span_px[0], []).append(k)
    cands = []
    for si, (_, a0, _a, c) in enumerate(spans):
        for k in by_start.get(a0, ()):
            dist = np.abs(detected[k].peak_px - c)
            frac = float(np.mean(dist <= tol_px))
            if frac >= min_fraction:
                cands.append((-frac, float(dist.mean()), si, k))
    cands.sort()
    used_s, used_d, pairs = set(), set(), []
    for _, _, si, k in cands:
        if si in used_s or k in used_d:
            continue
        used_s.add(si)
        used_d.add(k)
        pairs.append((si, k))
    tp = len(pairs)
    return MatchResult(tp, len(detected) - tp, len(spans) - tp, pairs)


# ---------------------------------------------------------------------------
# application accuracy


def application_accuracy(expected_m2: float, measured_m2: float) -> tuple[float, float]:
    """(measured / expected * 100, (measured - expected) / expected)."""
    if expected_m2 == 0:
        raise UndefinedMetricError("application accuracy undefined: expected no-spray area is 0")
    if not expected_m2 > 0 or measured_m2 < 0:
        raise DataError(f"areas must be >= 0 (expected {expected_m2}, measured {measured_m2})")
    return measured_m2 / expected_m2 * 100.0, (measured_m2 - expected_m2) / expected_m2


@dataclass(frozen=True)
class ApplicationRow:
    plot_id: str
    expected_m2: float
    measured_m2: float

    @property
    def sprayed_in_no_spray_m2(self) -> float:
        return self.expected_m2 - self.measured_m2

    @property
    def pct(self) -> float:
        return self.sprayed_in_no_spray_m2 / self.expected_m2 * 100.0 if self.expected_m2 > 0 else math.nan


@dataclass(frozen=True)
class ApplicationReport:
    expected_no_spray_m2: float
    measured_no_spray_m2: float
    accuracy_pct: float
    relative_error: float
    per_plot: list[ApplicationRow]

    @classmethod
    def from_rows(cls, rows: Mapping[str, tuple[float, float]] | Sequence[ApplicationRow]) -> "ApplicationReport":
        if isinstance(rows, Mapping):
            rows = [ApplicationRow(k, float(v[0]), float(v[1])) for k, v in rows.items()]
        rows = list(rows)
        exp = sum(r.expected_m2 for r in rows)
        meas = sum(r.measured_m2 for r in rows)
        acc, rel = application_accuracy(exp, meas)
        return cls(exp, meas, acc, rel, rows)

    def to_dict(self) -> dict:
        return {
            "expected_no_spray_m2": self.expected_no_spray_m2,
            "measured_no_spray_m2": self.measured_no_spray_m2,
            "accuracy_pct": self.accuracy_pct,
            "relative_error": self.relative_error,
            "per_plot": [
                {
                    "plot_id": r.plot_id,
                    "expected_m2": r.expected_m2,
                    "measured_m2": r.measured_m2,
                    "sprayed_in_no_spray_m2": r.sprayed_in_no_spray_m2,
                    "pct": r.pct,
                }
                for r in self.per_plot
            ],
        }

    def table(self) -> str:
        widths = (10, 12, 12, 12, 8)
        lines = [_row(("Test-Plot", "Rx no-spray", "Applied no-spray", "Sprayed in", "%"), (10, 12, 16, 12, 8))]
        for r in self.per_plot:
            lines.append(_row((r.plot_id, r.expected_m2, r.measured_m2, r.sprayed_in_no_spray_m2, r.pct), widths))
        total = ApplicationRow("TOTAL", self.expected_no_spray_m2, self.measured_no_spray_m2)
        lines.append(_row((total.plot_id, total.expected_m2, total.measured_m2, total.sprayed_in_no_spray_m2, total.pct), widths))
        lines.append(f"accuracy {self.accuracy_pct:.1f}%  relative error {self.relative_error:.3f}")
        return "\n".join(lines)


def application_report(rx: Sequence[PrescriptionMap], applied: AsAppliedMap | GeoRaster) -> ApplicationReport:
    """Expected (prescribed) vs measured (as-applied) no-spray area per plot."""
    rows = []
    for m in rx:
        rows.append(ApplicationRow(m.plot_id, no_spray_area(m), as_applied_no_spray_area(applied, within=m)))
    return ApplicationReport.from_rows(rows)


# ---------------------------------------------------------------------------
# prescription change


@dataclass(frozen=True)
class AreaLossRow:
    plot_id: str
    a_m2: float
    b_m2: float

    @property
    def loss_m2(self) -> float:
        return self.a_m2 - self.b_m2

    @property
    def loss_pct(self) -> float:
        if self.a_m2 == 0:
            raise UndefinedMetricError(f"loss % undefined for plot {self.plot_id!r}: original area is 0")
        return self.loss_m2 / self.a_m2 * 100.0

    def to_dict(self) -> dict:
        return {"plot_id": self.plot_id, "a_m2": self.a_m2, "b_m2": self.b_m2,
                "loss_m2": self.loss_m2, "loss_pct": self.loss_pct}


@dataclass(frozen=True)
class AreaLossReport:
    per_plot: list[AreaLossRow]
    total: AreaLossRow

    def to_dict(self) -> dict:
        return {"per_plot": [r.to_dict() for r in self.per_plot], "total": self.total.to_dict()}

    def table(self) -> str:
        widths = (10, 12, 12, 12, 8)
        lines = [_row(("Plot", "Original", "Modified", "Loss m2", "Loss %"), widths)]
        for r in self.per_plot + [self.total]:
            lines.append(_row((r.plot_id, r.a_m2, r.b_m2, r.loss_m2, r.loss_pct), widths))
        return "\n".join(lines)


def _no_spray_by_plot(m) -> dict[str, float]:
    if isinstance(m, Mapping):
        return {str(k): float(v) for k, v in m.items()}
    return {pm.plot_id: no_spray_area(pm) for pm in m}


def area_loss(map_a, map_b) -> AreaLossReport:
    """No-spray area lost going from prescription ``map_a`` to ``map_b``.

    Either argument may be a list of per-plot prescriptions or a mapping of
    plot id to no-spray area.
    """
    a = _no_spray_by_plot(map_a)
    b = _no_spray_by_plot(map_b)
    if set(a) != set(b):
        missing = sorted(set(a) ^ set(b))
        raise DataError(f"plot sets differ; unmatched plot ids: {missing}")
    rows = [AreaLossRow(pid, a[pid], b[pid]) for pid in a]
    total = AreaLossRow("TOTAL", sum(r.a_m2 for r in rows), sum(r.b_m2 for r in rows))
    return AreaLossReport(rows, total)


# ---------------------------------------------------------------------------
# treatment effectiveness


@dataclass(frozen=True)
class EffectivenessReport:
    per_plot: dict[str, float]
    treatments: dict[str, str]
    per_treatment: dict[str, float]
    numerator: str
    denominator: str

    @property
    def ratio(self) -> float:
        den = self.per_treatment[self.denominator]
        if den == 0:
            raise UndefinedMetricError(f"weed area of treatment {self.denominator!r} is 0")
        return self.per_treatment[self.numerator] / den

    @classmethod
    def from_areas(
        cls,
        per_plot: Mapping[str, float],
        treatments: Mapping[str, str],
        numerator: str = "SSWC",
        denominator: str = "NO-SSWC",
    ) -> "EffectivenessReport":
        sums: dict[str, float] = {}
        for pid, area in per_plot.items():
            if pid not in treatments:
                raise DataError(f"plot {pid!r} has no treatment tag")
            sums[treatments[pid]] = sums.get(treatments[pid], 0.0) + float(area)
        for t in (numerator, denominator):
            if t not in sums:
                raise DataError(f"treatment {t!r} has no plots")
        return cls(dict(per_plot), dict(treatments), sums, numerator, denominator)

    def to_dict(self) -> dict:
        return {
            "per_plot": self.per_plot,
            "treatments": self.treatments,
            "per_treatment": self.per_treatment,
            "ratio": self.ratio,
            "numerator": self.numerator,
            "denominator": self.denominator,
        }

    def table(self) -> str:
        lines = [_row(("Plot", "Treatment", "Weed m2"), (10, 10, 10))]
        for pid, area in self.per_plot.items():
            lines.append(_row((pid, self.treatments[pid], float(area)), (10, 10, 10)))
        for t, s in self.per_treatment.items():
            lines.append(_row(("SUM", t, s), (10, 10, 10)))
        lines.append(f"ratio {self.numerator}/{self.denominator} = {self.ratio:.2f}")
        return "\n".join(lines)


def plot_mask_area(mask: BinaryMask, plot: Plot) -> float:
    """Mask area counting only pixels whose centers fall inside ``plot``."""
    t = mask.transform
    h, w = mask.shape
    xc = t.origin_x + (np.arange(w) + 0.5) * t.pixel_size_x
    yc = t.origin_y - (np.arange(h) + 0.5) * t.pixel_size_y
    cols = np.flatnonzero((xc >= plot.min_x) & (xc <= plot.max_x))
    rows = np.flatnonzero((yc >= plot.min_y) & (yc <= plot.max_y))
    if cols.size == 0 or rows.size == 0:
        return 0.0
    sub = mask.plane[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    return int(np.count_nonzero(sub)) * t.pixel_area


def effectiveness(
    weeds_post: BinaryMask,
    plots: Sequence[Plot],
    numerator: str = "SSWC",
    denominator: str = "NO-SSWC",
) -> EffectivenessReport:
    """Post-season weed area per plot, summed per treatment tag."""
    per_plot = {p.plot_id: plot_mask_area(weeds_post, p) for p in plots}
    tags = {p.plot_id: p.treatment for p in plots}
    return EffectivenessReport.from_areas(per_plot, tags, numerator, denominator)
