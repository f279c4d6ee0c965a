"""Longitudinal error decomposition, affinity, and line-of-sight alignment.

All centers are expressed in a sensor-centered frame: the sensor sits at the
origin and the line of sight to an object is the ray from the origin through
the object's center. The longitudinal error of a prediction is the component
of its center error along the line of sight to the ground truth; the lateral
error is the perpendicular remainder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box3D, Vec3

# Centers closer to the sensor origin than this are physically meaningless
# and rejected loudly instead of producing silently-zero affinities.
MIN_CENTER_RANGE = 1e-6

# Longitudinal magnitudes below this are floating-point residue (e.g. from a
# purely lateral perturbation) and score a full affinity of exactly 1.0.
LONGITUDINAL_NOISE_FLOOR = 1e-9


class DegenerateGroundTruth(ValueError):
    """Ground-truth center is (numerically) at the sensor origin."""


class DegeneratePrediction(ValueError):
    """Prediction center is (numerically) at the sensor origin."""


@dataclass(frozen=True)
class ToleranceConfig:
    """Longitudinal tolerance: a range-proportional term with an absolute floor.

    ``tolerance_pct`` is the tolerated longitudinal error as a fraction of the
    range to the ground truth; ``min_tolerance_m`` keeps the matching region
    usable for very close objects.
    """

    tolerance_pct: float = 0.1
    min_tolerance_m: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.tolerance_pct <= 1.0):
            raise ValueError(f"tolerance_pct must be in (0, 1], got {self.tolerance_pct}")
        if self.min_tolerance_m < 0.0:
            raise ValueError(f"min_tolerance_m must be >= 0, got {self.min_tolerance_m}")


@dataclass(frozen=True)
class ErrorDecomposition:
    """Center error split into longitudinal and lateral components.

    Satisfies e_lon + e_lat == e_loc and e_lat perpendicular to the line of
    sight to the ground truth (both up to 1e-9).
    """

    e_loc: Vec3
    e_lon: Vec3
    e_lat: Vec3


def _require_range(center: np.ndarray, err: type[ValueError], what: str) -> float:
    r = float(np.linalg.norm(center))
    if r < MIN_CENTER_RANGE:
        raise err(f"{what} center is within {MIN_CENTER_RANGE} m of the sensor origin")
    return r


def decompose_error(p: Vec3, g: Vec3) -> ErrorDecomposition:
    """Split the center error p - g along / across the line of sight to g."""
    gv = g.as_array()
    r = _require_range(gv, DegenerateGroundTruth, "ground-truth")
    u = gv / r
    e_loc = p.as_array() - gv
    e_lon = float(e_loc @ u) * u
    e_lat = e_loc - e_lon
    return ErrorDecomposition(Vec3.from_array(e_loc), Vec3.from_array(e_lon),
                              Vec3.from_array(e_lat))


def longitudinal_tolerance(range_to_gt: float, cfg: ToleranceConfig) -> float:
    """Tolerated longitudinal error in meters at the given ground-truth range."""
    if range_to_gt < 0.0:
        raise ValueError(f"range must be >= 0, got {range_to_gt}")
    return max(cfg.tolerance_pct * range_to_gt, cfg.min_tolerance_m)


def affinity_from_error(e_lon_mag, tolerance):
    """Linear affinity ramp 1 - min(|e_lon|/T, 1); accepts scalars or arrays.

    Magnitudes below the numerical noise floor score exactly 1.0 so that
    error-free (up to rounding) predictions are not penalized.
    """
    e = np.asarray(e_lon_mag, dtype=float)
    t = np.asarray(tolerance, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ramp = 1.0 - np.minimum(np.where(t > 0.0, e / np.where(t > 0.0, t, 1.0), np.inf), 1.0)
    out = np.where(e < LONGITUDINAL_NOISE_FLOOR, 1.0, ramp)
    if np.ndim(e_lon_mag) == 0 and np.ndim(tolerance) == 0:
        return float(out)
    return out


def longitudinal_affinity(p: Vec3, g: Vec3, cfg: ToleranceConfig) -> float:
    """Affinity in [0, 1] of a prediction center to a ground-truth center."""
    gv = g.as_array()
    r = _require_range(gv, DegenerateGroundTruth, "ground-truth")
    e_lon_mag = abs(float((p.as_array() - gv) @ (gv / r)))
    return affinity_from_error(e_lon_mag, longitudinal_tolerance(r, cfg))


def align_prediction(pred: Box3D, gt_center: Vec3) -> Box3D:
    """Slide a prediction along its own line of sight to the point nearest gt.

    The aligned center is the projection of the ground-truth center onto the
    line through the sensor origin and the prediction center. Dimensions and
    heading are unchanged.
    """
    pv = pred.center.as_array()
    r = _require_range(pv, DegeneratePrediction, "prediction")
    u = pv / r
    aligned = float(gt_center.as_array() @ u) * u
    return pred.with_center(Vec3.from_array(aligned))


def let_iou(pred: Box3D, gt: Box3D) -> float:
    """3D IoU after correcting the prediction's longitudinal error.

    Computed unconditionally, without assuming the longitudinal error falls
    within any tolerance; gating on affinity happens at matching time.
    """
    from .geometry import iou_3d

    return iou_3d(align_prediction(pred, gt.center), gt)


def radial_range(center: Vec3) -> float:
    """Distance from the sensor origin to a center."""
    return center.norm()


__all__ = [
    "DegenerateGroundTruth",
    "DegeneratePrediction",
    "ToleranceConfig",
    "ErrorDecomposition",
    "MIN_CENTER_RANGE",
    "LONGITUDINAL_NOISE_FLOOR",
    "decompose_error",
    "longitudinal_tolerance",
    "affinity_from_error",
    "longitudinal_affinity",
    "align_prediction",
    "let_iou",
    "radial_range",
]
