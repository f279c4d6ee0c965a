"""Pydantic request/response models for the evaluation service.

Object records mirror the line-based dataset format; converters translate
between payloads and the core dataclasses so the CLI and the HTTP service
share one operation layer.
"""

from __future__ import annotations

import math

from pydantic import BaseModel, Field, field_validator

from .. import config as cfg
from .. import datasets, metrics
from ..geometry import Box3D, Vec3
from ..let import ToleranceConfig
from ..synth import NoiseModel, SceneSpec


class ObjectRecord(BaseModel):
    frame_id: str = Field(min_length=1)
    class_label: str = Field(min_length=1)
    cx: float
    cy: float
    cz: float
    length: float = Field(gt=0)
    width: float = Field(gt=0)
    height: float = Field(gt=0)
    heading: float

    @field_validator("cx", "cy", "cz", "length", "width", "height", "heading")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v


class GroundTruthIn(ObjectRecord):
    pass


class PredictionIn(ObjectRecord):
    score: float = Field(ge=0.0, le=1.0)


class FrameOrigin(BaseModel):
    frame_id: str = Field(min_length=1)
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0


class CutoffPolicyModel(BaseModel):
    mode: str = "auto"
    quantile_count: int = 200
    values: list[float] | None = None


class ConfigModel(BaseModel):
    longitudinal_tolerance_pct: float = 0.1
    min_longitudinal_tolerance_m: float = 0.5
    iou_thresholds: dict[str, float] = dict(cfg.DEFAULT_IOU_THRESHOLDS)
    default_iou_threshold: float = 0.5
    matcher: str = "hungarian"
    cutoffs: CutoffPolicyModel = CutoffPolicyModel()
    range_bins: list[list[float | None]] = [[0.0, 30.0], [30.0, 50.0], [50.0, None]]

    def to_eval_config(self) -> cfg.EvalConfig:
        return cfg.config_from_dict(self.model_dump())

    @classmethod
    def from_eval_config(cls, config: cfg.EvalConfig) -> "ConfigModel":
        return cls.model_validate(cfg.config_to_dict(config))


class EvaluateRequest(BaseModel):
    ground_truths: list[GroundTruthIn]
    predictions: list[PredictionIn]
    origins: list[FrameOrigin] = []
    config: ConfigModel | None = None
    workers: int | None = None


class PRPointModel(BaseModel):
    score_cutoff: float
    recall: float
    precision: float
    weighted_precision: float
    mean_affinity: float
    tp_p: float
    fp: float
    tp_g: int
    fn: int


class BinResultModel(BaseModel):
    class_label: str = Field(alias="class")
    range_bin: str
    num_ground_truths: int
    num_predictions: int
    ap_3d: float | None
    let_3d_ap: float | None
    let_3d_apl: float | None
    mean_longitudinal_affinity: float | None
    pr_curve: list[PRPointModel]

    model_config = {"populate_by_name": True}


class ReportModel(BaseModel):
    schema_version: int
    config: ConfigModel
    results: list[BinResultModel]

    @classmethod
    def from_report(cls, report: metrics.MetricsReport) -> "ReportModel":
        return cls.model_validate(datasets.report_to_dict(report))

    def to_report(self) -> metrics.MetricsReport:
        return datasets.report_from_dict(self.model_dump(by_alias=True))


class EvaluateResponse(ReportModel):
    pass


class SweepRequest(EvaluateRequest):
    tolerances: list[float] = Field(min_length=1)


class SweepRow(BaseModel):
    tolerance: float
    class_label: str
    range_bin: str
    let_3d_ap: float | None
    let_3d_apl: float | None


class SweepResponse(BaseModel):
    rows: list[SweepRow]


class SceneSpecModel(BaseModel):
    num_frames: int = Field(default=20, ge=0)
    objects_per_frame: int | tuple[int, int] = 10
    range_min: float = 4.0
    range_max: float = 60.0
    class_mix: dict[str, float] | None = None
    dims_spread: float = 0.08
    seed: int = 0

    def to_spec(self) -> SceneSpec:
        kwargs = self.model_dump()
        if kwargs["class_mix"] is None:
            kwargs.pop("class_mix")
        counts = kwargs["objects_per_frame"]
        if isinstance(counts, list):
            kwargs["objects_per_frame"] = tuple(counts)
        return SceneSpec(**kwargs)


class NoiseModelModel(BaseModel):
    longitudinal_sigma_fraction: float = Field(default=0.0, ge=0)
    lateral_sigma: float = Field(default=0.0, ge=0)
    dims_sigma_fraction: float = Field(default=0.0, ge=0)
    heading_sigma: float = Field(default=0.0, ge=0)
    miss_rate: float = Field(default=0.0, ge=0, le=1)
    false_positives_per_frame: float = Field(default=0.0, ge=0)
    score_jitter: float = Field(default=0.05, ge=0)
    longitudinal_clip_fraction: float | None = None

    def to_noise(self) -> NoiseModel:
        return NoiseModel(**self.model_dump())


class SynthRequest(BaseModel):
    scene: SceneSpecModel = SceneSpecModel()
    noise: NoiseModelModel = NoiseModelModel()
    detector_seed: int | None = None


class SynthResponse(BaseModel):
    seed: int
    detector_seed: int
    ground_truths: list[GroundTruthIn]
    predictions: list[PredictionIn]
    origins: list[FrameOrigin]


class PRExportRequest(BaseModel):
    report: ReportModel


def frames_from_payload(ground_truths: list[GroundTruthIn],
                        predictions: list[PredictionIn],
                        origins: list[FrameOrigin]) -> list[datasets.FrameRecord]:
    """Group flat payload records into validated FrameRecords."""
    frames: dict[str, datasets.FrameRecord] = {}
    order: list[str] = []

    def frame_of(frame_id: str) -> datasets.FrameRecord:
        f = frames.get(frame_id)
        if f is None:
            f = datasets.FrameRecord(frame_id=frame_id)
            frames[frame_id] = f
            order.append(frame_id)
        return f

    for o in origins:
        frame_of(o.frame_id).sensor_origin = Vec3(o.x, o.y, o.z)
    for g in ground_truths:
        f = frame_of(g.frame_id)
        box = Box3D(Vec3(g.cx, g.cy, g.cz), g.length, g.width, g.height, g.heading)
        datasets._check_center(f, len(f.ground_truths), box, "ground-truth")
        f.ground_truths.append(datasets.GroundTruthRecord(g.class_label, box))
    for p in predictions:
        f = frame_of(p.frame_id)
        box = Box3D(Vec3(p.cx, p.cy, p.cz), p.length, p.width, p.height, p.heading)
        datasets._check_center(f, len(f.predictions), box, "prediction")
        f.predictions.append(datasets.DetectionRecord(p.class_label, box, p.score))
    return [frames[fid] for fid in order]


def frames_to_payload(frames: list[datasets.FrameRecord]):
    """Flatten FrameRecords into payload record lists (origins only when set)."""
    gts, preds, origins = [], [], []
    for f in frames:
        if f.sensor_origin != Vec3(0.0, 0.0, 0.0):
            o = f.sensor_origin
            origins.append(FrameOrigin(frame_id=f.frame_id, x=o.x, y=o.y, z=o.z))
        for g in f.ground_truths:
            b = g.box
            gts.append(GroundTruthIn(
                frame_id=f.frame_id, class_label=g.class_label,
                cx=b.center.x, cy=b.center.y, cz=b.center.z,
                length=b.length, width=b.width, height=b.height, heading=b.heading))
        for p in f.predictions:
            b = p.box
            preds.append(PredictionIn(
                frame_id=f.frame_id, class_label=p.class_label,
                cx=b.center.x, cy=b.center.y, cz=b.center.z,
                length=b.length, width=b.width, height=b.height, heading=b.heading,
                score=p.score))
    return gts, preds, origins


def sweep_rows(results) -> list[SweepRow]:
    rows = []
    for tolerance, report in results:
        for entry in report.entries:
            rows.append(SweepRow(
                tolerance=tolerance,
                class_label=entry.class_label,
                range_bin="all" if entry.aggregate else cfg.bin_label(entry.range_bin),
                let_3d_ap=entry.let_3d_ap,
                let_3d_apl=entry.let_3d_apl,
            ))
    return rows
