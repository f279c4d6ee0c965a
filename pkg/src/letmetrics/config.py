"""Evaluation configuration: tolerances, thresholds, matcher, cutoffs, bins.

The defaults mirror the standard camera-detection challenge protocol:
10% longitudinal tolerance with a 0.5 m floor, per-class IoU thresholds of
0.5 (vehicle) / 0.3 (pedestrian) / 0.3 (cyclist), Hungarian matching, and
range bins [0, 30), [30, 50), [50, inf) meters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .let import ToleranceConfig

VEHICLE = "vehicle"
PEDESTRIAN = "pedestrian"
CYCLIST = "cyclist"

DEFAULT_IOU_THRESHOLDS = {VEHICLE: 0.5, PEDESTRIAN: 0.3, CYCLIST: 0.3}
DEFAULT_RANGE_BINS = ((0.0, 30.0), (30.0, 50.0), (50.0, math.inf))

MATCHERS = ("hungarian", "greedy")
CUTOFF_MODES = ("auto", "distinct", "quantiles", "explicit")


class InvalidCutoffSchedule(ValueError):
    """Cutoff schedule is empty, out of range, or not strictly decreasing."""


@dataclass(frozen=True)
class CutoffPolicy:
    """How score cutoffs are derived for PR curves.

    "distinct" uses every distinct prediction score; "quantiles" picks
    ``quantile_count`` rank-derived score quantiles (so the schedule depends
    only on score order); "explicit" uses ``values`` verbatim; "auto" uses
    distinct scores when there are at most ``quantile_count`` of them and
    quantiles otherwise. Derived schedules always end with a cutoff of 0.
    """

    mode: str = "auto"
    quantile_count: int = 200
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.mode not in CUTOFF_MODES:
            raise InvalidCutoffSchedule(f"unknown cutoff mode {self.mode!r}")
        if self.quantile_count < 2:
            raise InvalidCutoffSchedule("quantile_count must be >= 2")
        if self.mode == "explicit":
            vals = self.values
            if not vals:
                raise InvalidCutoffSchedule("explicit cutoff schedule is empty")
            if any(not (0.0 <= v <= 1.0) for v in vals):
                raise InvalidCutoffSchedule("cutoffs must lie in [0, 1]")
            if any(b >= a for a, b in zip(vals, vals[1:])):
                raise InvalidCutoffSchedule("cutoffs must be strictly decreasing")
            object.__setattr__(self, "values", tuple(float(v) for v in vals))


@dataclass(frozen=True)
class EvalConfig:
    tolerance: ToleranceConfig = field(default_factory=ToleranceConfig)
    iou_thresholds: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_IOU_THRESHOLDS))
    default_iou_threshold: float = 0.5
    matcher: str = "hungarian"
    cutoffs: CutoffPolicy = field(default_factory=CutoffPolicy)
    range_bins: tuple[tuple[float, float], ...] = DEFAULT_RANGE_BINS

    def __post_init__(self):
        for cls, thr in self.iou_thresholds.items():
            if not (0.0 < thr < 1.0):
                raise ValueError(f"IoU threshold for {cls!r} must be in (0, 1), got {thr}")
        if not (0.0 < self.default_iou_threshold < 1.0):
            raise ValueError("default_iou_threshold must be in (0, 1)")
        if self.matcher not in MATCHERS:
            raise ValueError(f"matcher must be one of {MATCHERS}, got {self.matcher!r}")
        bins = tuple((float(lo), float(hi)) for lo, hi in self.range_bins)
        if not bins:
            raise ValueError("range_bins must be non-empty")
        if bins[0][0] != 0.0:
            raise ValueError("range_bins must start at 0")
        for (lo, hi), (lo2, _) in zip(bins, bins[1:]):
            if hi != lo2:
                raise ValueError("range_bins must be contiguous and non-overlapping")
        for lo, hi in bins:
            if not hi > lo:
                raise ValueError(f"empty range bin [{lo}, {hi})")
        if not math.isinf(bins[-1][1]):
            raise ValueError("range_bins must cover [0, inf); last bin must be unbounded")
        object.__setattr__(self, "range_bins", bins)

    def iou_threshold_for(self, class_label: str) -> float:
        return self.iou_thresholds.get(class_label, self.default_iou_threshold)


def bin_label(bin_range: tuple[float, float]) -> str:
    lo, hi = bin_range
    hi_s = "inf" if math.isinf(hi) else f"{hi:g}"
    return f"[{lo:g}, {hi_s})"


def config_to_dict(cfg: EvalConfig) -> dict:
    return {
        "longitudinal_tolerance_pct": cfg.tolerance.tolerance_pct,
        "min_longitudinal_tolerance_m": cfg.tolerance.min_tolerance_m,
        "iou_thresholds": {k: cfg.iou_thresholds[k] for k in sorted(cfg.iou_thresholds)},
        "default_iou_threshold": cfg.default_iou_threshold,
        "matcher": cfg.matcher,
        "cutoffs": {
            "mode": cfg.cutoffs.mode,
            "quantile_count": cfg.cutoffs.quantile_count,
            "values": list(cfg.cutoffs.values) if cfg.cutoffs.values is not None else None,
        },
        "range_bins": [[lo, None if math.isinf(hi) else hi] for lo, hi in cfg.range_bins],
    }


def config_from_dict(data: dict) -> EvalConfig:
    tol = ToleranceConfig(
        tolerance_pct=float(data.get("longitudinal_tolerance_pct", 0.1)),
        min_tolerance_m=float(data.get("min_longitudinal_tolerance_m", 0.5)),
    )
    cut = data.get("cutoffs", {})
    values = cut.get("values")
    policy = CutoffPolicy(
        mode=cut.get("mode", "auto"),
        quantile_count=int(cut.get("quantile_count", 200)),
        values=tuple(values) if values is not None else None,
    )
    bins = data.get("range_bins")
    if bins is None:
        range_bins = DEFAULT_RANGE_BINS
    else:
        range_bins = tuple(
            (float(lo), math.inf if hi is None else float(hi)) for lo, hi in bins)
    return EvalConfig(
        tolerance=tol,
        iou_thresholds={str(k): float(v) for k, v in
                        data.get("iou_thresholds", DEFAULT_IOU_THRESHOLDS).items()},
        default_iou_threshold=float(data.get("default_iou_threshold", 0.5)),
        matcher=data.get("matcher", "hungarian"),
        cutoffs=policy,
        range_bins=range_bins,
    )


def load_config(path) -> EvalConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: EvalConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")
