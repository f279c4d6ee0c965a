"""Synthetic scenes and detector noise for validating metric behavior.

Scenes place non-overlapping upright boxes on the ground plane around a
sensor at the origin. The detector model displaces each kept ground truth
radially (depth error, standard deviation proportional to range) and
laterally (constant standard deviation, random direction perpendicular to
the line of sight), jitters dimensions and heading, drops objects, and adds
spurious detections. Everything is deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import DetectionRecord, FrameRecord, GroundTruthRecord
from .geometry import Box3D, ConvexPolygon2D, Vec3, bev_footprint, convex_intersection_area

DEFAULT_CLASS_MIX = {"vehicle": 0.6, "pedestrian": 0.3, "cyclist": 0.1}
DEFAULT_DIMENSIONS = {
    "vehicle": (4.6, 2.0, 1.7),
    "pedestrian": (0.6, 0.7, 1.8),
    "cyclist": (1.8, 0.7, 1.7),
}
_PLACEMENT_ATTEMPTS = 500


class PlacementFailure(RuntimeError):
    """Could not place a non-overlapping box within the retry budget."""


@dataclass(frozen=True)
class SceneSpec:
    """Layout of a synthetic dataset; fully determined by the seed."""

    num_frames: int = 20
    objects_per_frame: int | tuple[int, int] = 10
    range_min: float = 4.0
    range_max: float = 60.0
    class_mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CLASS_MIX))
    dimension_priors: dict[str, tuple[float, float, float]] = field(
        default_factory=lambda: dict(DEFAULT_DIMENSIONS))
    dims_spread: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if self.num_frames < 0:
            raise ValueError("num_frames must be >= 0")
        counts = self.objects_per_frame
        if isinstance(counts, tuple):
            lo, hi = counts
            if lo < 0 or hi < lo:
                raise ValueError(f"bad objects_per_frame range {counts}")
        elif counts < 0:
            raise ValueError("objects_per_frame must be >= 0")
        if not (0.0 < self.range_min < self.range_max):
            raise ValueError("need 0 < range_min < range_max")
        if not self.class_mix or any(w < 0 for w in self.class_mix.values()):
            raise ValueError("class_mix must be non-empty with weights >= 0")
        for cls in self.class_mix:
            if cls not in self.dimension_priors:
                raise ValueError(f"no dimension prior for class {cls!r}")


@dataclass(frozen=True)
class NoiseModel:
    """Detector error model.

    ``longitudinal_sigma_fraction`` is the standard deviation of the radial
    (depth) error as a fraction of the object's range; ``lateral_sigma`` is a
    range-independent standard deviation in meters. Scores follow a monotone
    link: cleaner depth gives higher score, plus Gaussian jitter. When
    ``longitudinal_clip_fraction`` is set, radial errors are clipped to that
    fraction of the range, modeling depth estimators whose relative error is
    bounded in practice.
    """

    longitudinal_sigma_fraction: float = 0.0
    lateral_sigma: float = 0.0
    dims_sigma_fraction: float = 0.0
    heading_sigma: float = 0.0
    miss_rate: float = 0.0
    false_positives_per_frame: float = 0.0
    score_jitter: float = 0.05
    longitudinal_clip_fraction: float | None = None

    def __post_init__(self):
        for name in ("longitudinal_sigma_fraction", "lateral_sigma",
                     "dims_sigma_fraction", "heading_sigma", "score_jitter",
                     "false_positives_per_frame"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if not (0.0 <= self.miss_rate <= 1.0):
            raise ValueError("miss_rate must be in [0, 1]")
        clip = self.longitudinal_clip_fraction
        if clip is not None and clip <= 0.0:
            raise ValueError("longitudinal_clip_fraction must be > 0 when set")


def _count_for_frame(spec: SceneSpec, rng) -> int:
    counts = spec.objects_per_frame
    if isinstance(counts, tuple):
        return int(rng.integers(counts[0], counts[1] + 1))
    return int(counts)


def _sample_class(rng, mix: dict[str, float]) -> str:
    labels = sorted(mix)
    weights = np.array([mix[c] for c in labels], dtype=float)
    return labels[int(rng.choice(len(labels), p=weights / weights.sum()))]


def _sample_dims(rng, prior, spread) -> tuple[float, float, float]:
    base = np.asarray(prior, dtype=float)
    factors = np.maximum(0.3, 1.0 + rng.normal(0.0, spread, size=3))
    dims = base * factors
    return float(dims[0]), float(dims[1]), float(dims[2])


def _footprints_overlap(fp: ConvexPolygon2D, placed: list[ConvexPolygon2D]) -> bool:
    for other in placed:
        if convex_intersection_area(fp, other) > 0.0:
            return True
    return False


def generate_ground_truth(spec: SceneSpec) -> list[FrameRecord]:
    """Frames of non-overlapping ground-truth boxes, deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    frames = []
    for k in range(spec.num_frames):
        frame = FrameRecord(frame_id=f"frame_{k:05d}")
        footprints: list[ConvexPolygon2D] = []
        for obj in range(_count_for_frame(spec, rng)):
            cls = _sample_class(rng, spec.class_mix)
            dims = _sample_dims(rng, spec.dimension_priors[cls], spec.dims_spread)
            for attempt in range(_PLACEMENT_ATTEMPTS):
                r = rng.uniform(spec.range_min, spec.range_max)
                az = rng.uniform(-math.pi, math.pi)
                heading = rng.uniform(-math.pi, math.pi)
                center = Vec3(r * math.cos(az), r * math.sin(az), dims[2] / 2.0)
                box = Box3D(center, *dims, heading=heading)
                fp = bev_footprint(box)
                if not _footprints_overlap(fp, footprints):
                    footprints.append(fp)
                    frame.ground_truths.append(GroundTruthRecord(cls, box))
                    break
            else:
                raise PlacementFailure(
                    f"frame {frame.frame_id}: no room for object {obj} "
                    f"after {_PLACEMENT_ATTEMPTS} attempts")
        frames.append(frame)
    return frames


def _orthobasis(u: np.ndarray):
    """Two unit vectors spanning the plane perpendicular to u."""
    helper = np.array([0.0, 0.0, 1.0])
    if abs(u @ helper) > 0.99:
        helper = np.array([1.0, 0.0, 0.0])
    v1 = np.cross(u, helper)
    v1 /= np.linalg.norm(v1)
    v2 = np.cross(u, v1)
    return v1, v2


def _detection_score(radial_error: float, rng_range: float,
                     noise: NoiseModel, rng) -> float:
    if noise.longitudinal_sigma_fraction > 0.0:
        base = 1.0 - abs(radial_error) / (3.0 * noise.longitudinal_sigma_fraction * rng_range)
    else:
        base = 1.0
    score = base + rng.normal(0.0, noise.score_jitter) if noise.score_jitter > 0.0 else base
    return float(min(1.0, max(0.0, score)))


def simulate_detector(frames: list[FrameRecord], noise: NoiseModel,
                      seed: int = 0) -> list[FrameRecord]:
    """Produce prediction sets for the given ground-truth frames.

    Returns new FrameRecord objects sharing the ground truths; existing
    predictions on the inputs are ignored.
    """
    rng = np.random.default_rng(seed)
    out = []
    for frame in frames:
        origin = frame.sensor_origin.as_array()
        result = FrameRecord(frame_id=frame.frame_id,
                             sensor_origin=frame.sensor_origin,
                             ground_truths=list(frame.ground_truths))
        gt_ranges = []
        for gt in frame.ground_truths:
            g = gt.box.center.as_array() - origin
            r = float(np.linalg.norm(g))
            gt_ranges.append(r)
            if rng.random() < noise.miss_rate:
                continue
            u = g / r
            radial = rng.normal(0.0, noise.longitudinal_sigma_fraction * r)
            if noise.longitudinal_clip_fraction is not None:
                cap = noise.longitudinal_clip_fraction * r
                radial = float(np.clip(radial, -cap, cap))
            v1, v2 = _orthobasis(u)
            phi = rng.uniform(0.0, 2.0 * math.pi)
            lateral = rng.normal(0.0, noise.lateral_sigma)
            offset = radial * u + lateral * (math.cos(phi) * v1 + math.sin(phi) * v2)
            center = gt.box.center.as_array() + offset
            dims = (
                gt.box.length * max(0.05, 1.0 + rng.normal(0.0, noise.dims_sigma_fraction)),
                gt.box.width * max(0.05, 1.0 + rng.normal(0.0, noise.dims_sigma_fraction)),
                gt.box.height * max(0.05, 1.0 + rng.normal(0.0, noise.dims_sigma_fraction)),
            )
            heading = gt.box.heading + rng.normal(0.0, noise.heading_sigma)
            box = Box3D(Vec3.from_array(center), *dims, heading=heading)
            score = _detection_score(radial, r, noise, rng)
            result.predictions.append(DetectionRecord(gt.class_label, box, score))

        if noise.false_positives_per_frame > 0.0:
            n_spurious = int(rng.poisson(noise.false_positives_per_frame))
            r_lo = min(gt_ranges) * 0.8 if gt_ranges else 5.0
            r_hi = max(gt_ranges) * 1.2 if gt_ranges else 50.0
            classes = sorted({g.class_label for g in frame.ground_truths}) or ["vehicle"]
            for _ in range(n_spurious):
                cls = classes[int(rng.integers(len(classes)))]
                prior = DEFAULT_DIMENSIONS.get(cls, DEFAULT_DIMENSIONS["vehicle"])
                dims = _sample_dims(rng, prior, 0.1)
                r = rng.uniform(max(1.0, r_lo), r_hi)
                az = rng.uniform(-math.pi, math.pi)
                center = Vec3(origin[0] + r * math.cos(az),
                              origin[1] + r * math.sin(az),
                              origin[2] + dims[2] / 2.0)
                box = Box3D(center, *dims, heading=rng.uniform(-math.pi, math.pi))
                score = float(rng.uniform(0.0, 0.3))
                result.predictions.append(DetectionRecord(cls, box, score))
        out.append(result)
    return out


def make_dataset(spec: SceneSpec, noise: NoiseModel,
                 detector_seed: int | None = None) -> list[FrameRecord]:
    """Generate ground truth and simulate a detector over it in one call."""
    frames = generate_ground_truth(spec)
    seed = spec.seed + 1 if detector_seed is None else detector_seed
    return simulate_detector(frames, noise, seed=seed)
