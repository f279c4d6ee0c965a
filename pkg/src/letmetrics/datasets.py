"""Line-delimited dataset IO, validation, and report serialization.

Ground truths and predictions live in separate UTF-8 text files with one
object per line, comma-separated, '.' decimal separator, angles in radians:

    ground truth:  frame_id,class,cx,cy,cz,length,width,height,heading[,ox,oy,oz]
    prediction:    frame_id,class,cx,cy,cz,length,width,height,heading,score[,ox,oy,oz]

The optional trailing triple is the per-frame sensor origin (defaults to the
coordinate origin); all lines of one frame must agree on it. Blank lines and
lines starting with '#' are skipped. Reports are written as JSON documents
with a frozen schema version and a stable field order, PR curves additionally
as CSV.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

from .config import bin_label, config_from_dict, config_to_dict
from .geometry import Box3D, Vec3
from .let import MIN_CENTER_RANGE

REPORT_SCHEMA_VERSION = 1

_GT_FIELDS = ("frame_id", "class", "cx", "cy", "cz", "length", "width",
              "height", "heading")
_ORIGIN_FIELDS = ("origin_x", "origin_y", "origin_z")


class DatasetError(Exception):
    """Base class for dataset input problems."""


class MissingFile(DatasetError):
    def __init__(self, path):
        super().__init__(f"input file does not exist: {path}")
        self.path = str(path)


class ParseError(DatasetError):
    def __init__(self, path, line_no: int, field_name: str, message: str):
        super().__init__(f"{path}:{line_no}: field {field_name!r}: {message}")
        self.path = str(path)
        self.line_no = line_no
        self.field = field_name


class ValidationError(DatasetError):
    def __init__(self, frame_id: str, record_index: int, message: str):
        super().__init__(
            f"frame {frame_id!r}, record {record_index}: {message}")
        self.frame_id = frame_id
        self.record_index = record_index


@dataclass(frozen=True)
class GroundTruthRecord:
    class_label: str
    box: Box3D


@dataclass(frozen=True)
class DetectionRecord:
    class_label: str
    box: Box3D
    score: float

    def __post_init__(self):
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be finite in [0, 1], got {self.score}")


@dataclass
class FrameRecord:
    frame_id: str
    sensor_origin: Vec3 = field(default_factory=lambda: Vec3(0.0, 0.0, 0.0))
    ground_truths: list[GroundTruthRecord] = field(default_factory=list)
    predictions: list[DetectionRecord] = field(default_factory=list)


def _parse_floats(path, line_no, names, raw):
    out = []
    for name, token in zip(names, raw):
        try:
            v = float(token)
        except ValueError:
            raise ParseError(path, line_no, name, f"not a number: {token!r}") from None
        if not math.isfinite(v):
            raise ParseError(path, line_no, name, f"not finite: {token!r}")
        out.append(v)
    return out


def _check_center(frame: FrameRecord, record_index: int, box: Box3D, kind: str):
    if (box.center - frame.sensor_origin).norm() < MIN_CENTER_RANGE:
        raise ValidationError(
            frame.frame_id, record_index,
            f"{kind} box center coincides with the sensor origin")


def _load_lines(path, with_score: bool):
    """Yield (line_no, frame_id, class_label, values, score, origin) tuples."""
    if not os.path.isfile(path):
        raise MissingFile(path)
    base = 10 if with_score else 9
    names = _GT_FIELDS + (("score",) if with_score else ())
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) not in (base, base + 3):
                raise ParseError(
                    path, line_no, "record",
                    f"expected {base} or {base + 3} comma-separated fields, got {len(parts)}")
            frame_id, class_label = parts[0], parts[1]
            if not frame_id:
                raise ParseError(path, line_no, "frame_id", "empty frame_id")
            if not class_label:
                raise ParseError(path, line_no, "class", "empty class label")
            values = _parse_floats(path, line_no, names[2:], parts[2:base])
            origin = None
            if len(parts) == base + 3:
                origin = _parse_floats(path, line_no, _ORIGIN_FIELDS, parts[base:])
            rows.append((line_no, frame_id, class_label, values, origin))
    return rows


def _frame_for(frames: dict[str, FrameRecord], order: list[str], frame_id: str,
               origin, path, line_no) -> FrameRecord:
    frame = frames.get(frame_id)
    if frame is None:
        frame = FrameRecord(frame_id=frame_id)
        if origin is not None:
            frame.sensor_origin = Vec3(*origin)
        frames[frame_id] = frame
        order.append(frame_id)
    elif origin is not None:
        declared = Vec3(*origin)
        if declared != frame.sensor_origin:
            raise ParseError(path, line_no, "origin_x",
                             f"conflicting sensor origin for frame {frame_id!r}")
    return frame


def load_dataset(gt_path, pred_path) -> list[FrameRecord]:
    """Load and validate paired ground-truth / prediction files.

    Records are grouped by frame_id; prediction frames without ground truth
    become frames with empty ground-truth lists (their detections still count
    as false positives).
    """
    frames: dict[str, FrameRecord] = {}
    order: list[str] = []

    for line_no, frame_id, class_label, values, origin in _load_lines(gt_path, False):
        frame = _frame_for(frames, order, frame_id, origin, gt_path, line_no)
        idx = len(frame.ground_truths)
        try:
            box = Box3D(Vec3(*values[:3]), *values[3:6], heading=values[6])
        except ValueError as exc:
            raise ValidationError(frame_id, idx, str(exc)) from None
        _check_center(frame, idx, box, "ground-truth")
        frame.ground_truths.append(GroundTruthRecord(class_label, box))

    for line_no, frame_id, class_label, values, origin in _load_lines(pred_path, True):
        frame = _frame_for(frames, order, frame_id, origin, pred_path, line_no)
        idx = len(frame.predictions)
        try:
            box = Box3D(Vec3(*values[:3]), *values[3:6], heading=values[6])
            record = DetectionRecord(class_label, box, score=values[7])
        except ValueError as exc:
            raise ValidationError(frame_id, idx, str(exc)) from None
        _check_center(frame, idx, box, "prediction")
        frame.predictions.append(record)

    return [frames[fid] for fid in order]


def _format_box(box: Box3D):
    return [repr(v) for v in (box.center.x, box.center.y, box.center.z,
                              box.length, box.width, box.height, box.heading)]


def _origin_suffix(frame: FrameRecord):
    o = frame.sensor_origin
    if o == Vec3(0.0, 0.0, 0.0):
        return []
    return [repr(o.x), repr(o.y), repr(o.z)]


def save_dataset(frames: list[FrameRecord], gt_path, pred_path) -> None:
    """Write frames back to the line format (floats use shortest round-trip repr)."""
    with open(gt_path, "w", encoding="utf-8") as fh:
        for frame in frames:
            for gt in frame.ground_truths:
                fields = [frame.frame_id, gt.class_label] + _format_box(gt.box) \
                    + _origin_suffix(frame)
                fh.write(",".join(fields) + "\n")
    with open(pred_path, "w", encoding="utf-8") as fh:
        for frame in frames:
            for det in frame.predictions:
                fields = [frame.frame_id, det.class_label] + _format_box(det.box) \
                    + [repr(det.score)] + _origin_suffix(frame)
                fh.write(",".join(fields) + "\n")


# --- report serialization ---------------------------------------------------

def report_to_dict(report) -> dict:
    """Stable-ordered plain-dict form of a MetricsReport."""
    results = []
    for entry in report.entries:
        results.append({
            "class": entry.class_label,
            "range_bin": "all" if entry.aggregate else bin_label(entry.range_bin),
            "num_ground_truths": entry.num_gts,
            "num_predictions": entry.num_preds,
            "ap_3d": entry.ap_3d,
            "let_3d_ap": entry.let_3d_ap,
            "let_3d_apl": entry.let_3d_apl,
            "mean_longitudinal_affinity": entry.mla,
            "pr_curve": [
                {
                    "score_cutoff": p.score_cutoff,
                    "recall": p.recall,
                    "precision": p.precision,
                    "weighted_precision": p.weighted_precision,
                    "mean_affinity": p.mean_affinity,
                    "tp_p": p.tp_p,
                    "fp": p.fp,
                    "tp_g": p.tp_g,
                    "fn": p.fn_count,
                }
                for p in entry.pr_curve
            ],
        })
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": config_to_dict(report.config),
        "results": results,
    }


def report_from_dict(data: dict):
    from .metrics import BinMetrics, MetricsReport, PRPoint

    if data.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise DatasetError(
            f"unsupported report schema version: {data.get('schema_version')!r}")
    cfg = config_from_dict(data["config"])
    entries = []
    for r in data["results"]:
        aggregate = r["range_bin"] == "all"
        rng = (0.0, math.inf) if aggregate else _parse_bin_label(r["range_bin"])
        entries.append(BinMetrics(
            class_label=r["class"],
            range_bin=rng,
            aggregate=aggregate,
            num_gts=int(r["num_ground_truths"]),
            num_preds=int(r["num_predictions"]),
            ap_3d=r["ap_3d"],
            let_3d_ap=r["let_3d_ap"],
            let_3d_apl=r["let_3d_apl"],
            mla=r["mean_longitudinal_affinity"],
            pr_curve=[
                PRPoint(
                    score_cutoff=p["score_cutoff"],
                    tp_p=p["tp_p"],
                    fp=p["fp"],
                    tp_g=int(p["tp_g"]),
                    fn_count=int(p["fn"]),
                    precision=p["precision"],
                    recall=p["recall"],
                    weighted_precision=p["weighted_precision"],
                    mean_affinity=p["mean_affinity"],
                )
                for p in r["pr_curve"]
            ],
        ))
    return MetricsReport(config=cfg, entries=entries)


def _parse_bin_label(label: str) -> tuple[float, float]:
    inner = label.strip()[1:-1]
    lo_s, hi_s = (s.strip() for s in inner.split(","))
    return float(lo_s), (math.inf if hi_s == "inf" else float(hi_s))


def write_report(report, path) -> None:
    text = json.dumps(report_to_dict(report), indent=2, allow_nan=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def load_report(path):
    if not os.path.isfile(path):
        raise MissingFile(path)
    with open(path, encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))


PR_CSV_HEADER = ("class", "range_bin", "cutoff", "recall", "precision",
                 "weighted_precision", "mean_affinity")


def pr_csv_text(report) -> str:
    """Every PR curve of a report flattened into one CSV table."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PR_CSV_HEADER)
    for entry in report.entries:
        label = "all" if entry.aggregate else bin_label(entry.range_bin)
        for p in entry.pr_curve:
            writer.writerow([
                entry.class_label, label, repr(p.score_cutoff),
                repr(p.recall), repr(p.precision),
                repr(p.weighted_precision), repr(p.mean_affinity),
            ])
    return buf.getvalue()


def write_pr_csv(report, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(pr_csv_text(report))
