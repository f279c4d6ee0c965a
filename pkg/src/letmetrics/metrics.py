"""PR-curve construction, soft TP/FP accumulation, and AP computation.

For every (class, range bin) the evaluator traces a precision-recall curve by
re-matching the detection subset at each score cutoff, then reports:

  * ap_3d       -- conventional AP with plain 3D-IoU matching weights,
  * let_3d_ap   -- AP under tolerant matching, with raw TP/FP/FN counts,
  * let_3d_apl  -- AP of the affinity-weighted precision (soft accumulators),
  * mla         -- let_3d_apl / let_3d_ap, the mean longitudinal affinity.

Matched predictions contribute their longitudinal affinity a to the soft
TP accumulator and 1 - a to the soft FP accumulator; unmatched predictions
contribute a full false positive. Recall always uses the unweighted matched
ground-truth count. Soft sums use exact (compensated) summation so results
are independent of frame order and worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from math import fsum

import numpy as np

from .config import CutoffPolicy, EvalConfig, InvalidCutoffSchedule
from .geometry import Box3D, Vec3, iou_3d
from .let import ToleranceConfig, affinity_from_error, let_iou, longitudinal_tolerance
from .matching import FrameMatchResult, WeightMatrix, gate_weights, match

FULL_RANGE = (0.0, math.inf)


@dataclass(frozen=True)
class PRPoint:
    """One operating point of a PR curve at a fixed score cutoff."""

    score_cutoff: float
    tp_p: float           # soft true-positive mass: sum of matched affinities
    fp: float             # soft false-positive mass
    tp_g: int             # matched ground truths
    fn_count: int         # unmatched ground truths
    precision: float      # raw: matched predictions / all predictions
    recall: float
    weighted_precision: float   # mean_affinity * precision
    mean_affinity: float


def accumulate_cutoff(frame_results, score_cutoff: float = 0.0) -> PRPoint:
    """Reduce per-frame match results (one cutoff, one class) to a PR point."""
    affinities = [m.affinity for r in frame_results for m in r.matches]
    matched = len(affinities)
    unmatched_preds = sum(len(r.unmatched_preds) for r in frame_results)
    fn = sum(len(r.unmatched_gts) for r in frame_results)
    tp_p = fsum(affinities)
    fp = fsum(1.0 - a for a in affinities) + float(unmatched_preds)
    n_preds = matched + unmatched_preds
    precision = matched / n_preds if n_preds else 0.0
    recall = matched / (matched + fn) if (matched + fn) else 0.0
    mean_affinity = tp_p / matched if matched else 0.0
    return PRPoint(
        score_cutoff=float(score_cutoff),
        tp_p=tp_p,
        fp=fp,
        tp_g=matched,
        fn_count=fn,
        precision=precision,
        recall=recall,
        weighted_precision=mean_affinity * precision,
        mean_affinity=mean_affinity,
    )


def average_precision(points, weighted: bool = False) -> float:
    """Integrate a PR curve from recall 0 with the step-envelope rule.

    Each point's precision is replaced by the maximum precision at any
    recall >= its own before the Riemann sum; ``weighted`` integrates the
    affinity-weighted precision instead.
    """
    if not points:
        return 0.0
    pts = sorted(points, key=lambda p: p.recall)
    env = [p.weighted_precision if weighted else p.precision for p in pts]
    for k in range(len(env) - 2, -1, -1):
        env[k] = max(env[k], env[k + 1])
    terms = []
    prev_r = 0.0
    for p, e in zip(pts, env):
        terms.append((p.recall - prev_r) * e)
        prev_r = p.recall
    return fsum(terms)


def build_cutoff_schedule(scores, policy: CutoffPolicy) -> list[float]:
    """Concrete strictly-decreasing cutoff list for a set of prediction scores."""
    if policy.mode == "explicit":
        return list(policy.values)
    distinct = sorted({float(s) for s in scores}, reverse=True)
    if policy.mode == "distinct" or (
            policy.mode == "auto" and len(distinct) <= policy.quantile_count):
        schedule = distinct
    else:
        # rank-derived quantiles: pick score values at evenly spaced ranks so
        # the schedule depends only on the ordering of the scores
        ranked = np.sort(np.asarray(list(scores), dtype=float))[::-1]
        q = policy.quantile_count
        idx = np.round(np.arange(q) * (len(ranked) - 1) / (q - 1)).astype(int)
        schedule = []
        for v in ranked[idx]:
            v = float(v)
            if not schedule or v < schedule[-1]:
                schedule.append(v)
    if not schedule or schedule[-1] > 0.0:
        schedule.append(0.0)
    return schedule


@dataclass
class BinMetrics:
    """Metrics and PR curve for one (class, range bin) slice of a dataset."""

    class_label: str
    range_bin: tuple[float, float]
    aggregate: bool
    num_gts: int
    num_preds: int
    ap_3d: float | None
    let_3d_ap: float | None
    let_3d_apl: float | None
    mla: float | None
    pr_curve: list[PRPoint]


@dataclass
class MetricsReport:
    config: EvalConfig
    entries: list[BinMetrics]

    def entry(self, class_label: str, range_bin="all") -> BinMetrics:
        for e in self.entries:
            if e.class_label != class_label:
                continue
            if range_bin == "all":
                if e.aggregate:
                    return e
            elif not e.aggregate and e.range_bin == tuple(range_bin):
                return e
        raise KeyError(f"no entry for ({class_label!r}, {range_bin!r})")

    def classes(self) -> list[str]:
        seen = []
        for e in self.entries:
            if e.class_label not in seen:
                seen.append(e.class_label)
        return seen


def _shift_box(box: Box3D, origin: Vec3) -> Box3D:
    return box.with_center(box.center - origin)


class _FrameCache:
    """Sensor-frame boxes of one frame/class with memoized pair geometry."""

    def __init__(self, frame, class_label: str):
        origin = frame.sensor_origin
        shift = origin != Vec3(0.0, 0.0, 0.0)
        self.gt_boxes = [
            _shift_box(g.box, origin) if shift else g.box
            for g in frame.ground_truths if g.class_label == class_label
        ]
        preds = [p for p in frame.predictions if p.class_label == class_label]
        self.pred_boxes = [_shift_box(p.box, origin) if shift else p.box for p in preds]
        self.scores = np.array([p.score for p in preds], dtype=float)
        self.gt_centers = np.array(
            [[b.center.x, b.center.y, b.center.z] for b in self.gt_boxes]).reshape(-1, 3)
        self.pred_centers = np.array(
            [[b.center.x, b.center.y, b.center.z] for b in self.pred_boxes]).reshape(-1, 3)
        self.gt_ranges = np.linalg.norm(self.gt_centers, axis=1)
        self.pred_ranges = np.linalg.norm(self.pred_centers, axis=1)
        if len(self.pred_boxes) and len(self.gt_boxes):
            u_g = self.gt_centers / self.gt_ranges[:, None]
            self.e_lon = np.abs(self.pred_centers @ u_g.T - self.gt_ranges[None, :])
        else:
            self.e_lon = np.zeros((len(self.pred_boxes), len(self.gt_boxes)))
        # BEV circumradii and z extents let the baseline path skip clearly
        # disjoint pairs without clipping
        self._gt_rad = np.array([0.5 * math.hypot(b.length, b.width) for b in self.gt_boxes])
        self._pred_rad = np.array([0.5 * math.hypot(b.length, b.width) for b in self.pred_boxes])
        self._let_iou: dict[tuple[int, int], float] = {}
        self._iou3d: dict[tuple[int, int], float] = {}

    def let_iou_at(self, i: int, j: int) -> float:
        key = (i, j)
        v = self._let_iou.get(key)
        if v is None:
            v = let_iou(self.pred_boxes[i], self.gt_boxes[j])
            self._let_iou[key] = v
        return v

    def iou3d_at(self, i: int, j: int) -> float:
        key = (i, j)
        v = self._iou3d.get(key)
        if v is None:
            p, g = self.pred_boxes[i], self.gt_boxes[j]
            horiz = math.hypot(p.center.x - g.center.x, p.center.y - g.center.y)
            if horiz > self._pred_rad[i] + self._gt_rad[j] or \
                    abs(p.center.z - g.center.z) >= 0.5 * (p.height + g.height):
                v = 0.0
            else:
                v = iou_3d(p, g)
            self._iou3d[key] = v
        return v


class _ClassEvaluator:
    """Evaluates one class over shared per-frame caches.

    The geometry caches are reused across range bins, cutoffs, and tolerance
    values (LET-IoU does not depend on the tolerance), which is what makes
    tolerance sweeps affordable.
    """

    def __init__(self, frames, class_label: str):
        self.class_label = class_label
        self.caches = [_FrameCache(f, class_label) for f in frames]

    def _frame_matrices(self, config: EvalConfig, cache: _FrameCache,
                        pred_idx, gt_idx, tolerant: bool):
        threshold = config.iou_threshold_for(self.class_label)
        n_p, n_g = len(pred_idx), len(gt_idx)
        if n_p == 0 or n_g == 0:
            z = np.zeros((n_p, n_g))
            return z, z.copy(), z.copy()
        if tolerant:
            e = cache.e_lon[np.ix_(pred_idx, gt_idx)]
            tol = np.array([longitudinal_tolerance(cache.gt_ranges[j], config.tolerance)
                            for j in gt_idx])
            aff = affinity_from_error(e, tol[None, :])
            ious = np.zeros((n_p, n_g))
            for a, b in zip(*np.nonzero(aff > 0.0)):
                ious[a, b] = cache.let_iou_at(int(pred_idx[a]), int(gt_idx[b]))
        else:
            aff = np.ones((n_p, n_g))
            ious = np.zeros((n_p, n_g))
            for a, gi in enumerate(pred_idx):
                for b, gj in enumerate(gt_idx):
                    ious[a, b] = cache.iou3d_at(int(gi), int(gj))
        return gate_weights(aff, ious, threshold), aff, ious

    def _curve(self, config: EvalConfig, per_frame, schedule, tolerant: bool):
        mats = []
        for cache, pred_idx, gt_idx in per_frame:
            w, aff, ious = self._frame_matrices(config, cache, pred_idx, gt_idx, tolerant)
            mats.append((cache.scores[pred_idx], w, aff, ious))
        points = []
        for cutoff in schedule:
            results = []
            for scores, w, aff, ious in mats:
                rows = scores >= cutoff
                wm = WeightMatrix(w[rows], aff[rows], ious[rows])
                results.append(match(wm, config.matcher))
            points.append(accumulate_cutoff(results, cutoff))
        return sorted(points, key=lambda p: p.recall)

    def bin_metrics(self, config: EvalConfig, bin_range, aggregate: bool,
                    include_baseline: bool = True) -> BinMetrics:
        lo, hi = bin_range
        per_frame = []
        scores = []
        num_gts = num_preds = 0
        for cache in self.caches:
            if aggregate:
                gt_idx = np.arange(len(cache.gt_boxes))
                pred_idx = np.arange(len(cache.pred_boxes))
            else:
                gt_idx = np.nonzero((cache.gt_ranges >= lo) & (cache.gt_ranges < hi))[0]
                pred_idx = np.nonzero((cache.pred_ranges >= lo) & (cache.pred_ranges < hi))[0]
            per_frame.append((cache, pred_idx, gt_idx))
            scores.extend(cache.scores[pred_idx].tolist())
            num_gts += len(gt_idx)
            num_preds += len(pred_idx)

        if num_gts == 0 and num_preds == 0:
            return BinMetrics(self.class_label, tuple(bin_range), aggregate,
                              0, 0, None, None, None, None, [])

        schedule = build_cutoff_schedule(scores, config.cutoffs)
        let_points = self._curve(config, per_frame, schedule, tolerant=True)
        let_ap = average_precision(let_points)
        let_apl = average_precision(let_points, weighted=True)
        ap_3d = None
        if include_baseline:
            base_points = self._curve(config, per_frame, schedule, tolerant=False)
            ap_3d = average_precision(base_points)
        mla = let_apl / let_ap if let_ap > 0.0 else None
        return BinMetrics(self.class_label, tuple(bin_range), aggregate,
                          num_gts, num_preds, ap_3d, let_ap, let_apl, mla, let_points)


def dataset_classes(frames) -> list[str]:
    labels = set()
    for f in frames:
        labels.update(g.class_label for g in f.ground_truths)
        labels.update(p.class_label for p in f.predictions)
    return sorted(labels)


def _bin_plan(config: EvalConfig):
    """Range bins to evaluate; the aggregate over all ranges always comes last."""
    bins = [(b, False) for b in config.range_bins]
    if len(config.range_bins) == 1:
        bins = []
    bins.append((FULL_RANGE, True))
    return bins


def _run_entries(evaluators, tasks, config, workers):
    def run(task):
        cls, bin_range, aggregate = task
        return evaluators[cls].bin_metrics(config, bin_range, aggregate)

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, tasks))
    return [run(t) for t in tasks]


def evaluate(frames, config: EvalConfig | None = None,
             workers: int | None = None) -> MetricsReport:
    """Full evaluation: every class, every range bin, plus the all-range row.

    Classes are the union of the labels present in the data and the labels
    with configured IoU thresholds, so configured-but-absent classes produce
    zero-count entries. Results are bitwise independent of ``workers``.
    """
    config = config if config is not None else EvalConfig()
    labels = sorted(set(dataset_classes(frames)) | set(config.iou_thresholds))
    evaluators = {cls: _ClassEvaluator(frames, cls) for cls in labels}
    tasks = [(cls, bin_range, aggregate)
             for cls in labels for bin_range, aggregate in _bin_plan(config)]
    entries = _run_entries(evaluators, tasks, config, workers)
    return MetricsReport(config=config, entries=entries)


def pr_curve(frames, class_label: str, range_bin, config: EvalConfig | None = None):
    """Tolerant-matching PR curve for one class and range bin.

    ``range_bin`` is a (low, high) pair in meters or "all" for the aggregate.
    Points come out in increasing-recall order.
    """
    config = config if config is not None else EvalConfig()
    evaluator = _ClassEvaluator(frames, class_label)
    aggregate = isinstance(range_bin, str)
    bin_range = FULL_RANGE if aggregate else tuple(range_bin)
    return evaluator.bin_metrics(config, bin_range, aggregate,
                                 include_baseline=False).pr_curve


def sweep(frames, config: EvalConfig, tolerances,
          workers: int | None = None) -> list[tuple[float, MetricsReport]]:
    """Evaluate at several longitudinal tolerance percentages.

    Geometry caches are shared across tolerance values since line-of-sight
    alignment does not depend on the tolerance.
    """
    tolerances = list(tolerances)
    if not tolerances:
        raise ValueError("tolerance list must be non-empty")
    for t in tolerances:
        if not (0.0 < t <= 1.0):
            raise ValueError(f"tolerance must be in (0, 1], got {t}")
    labels = sorted(set(dataset_classes(frames)) | set(config.iou_thresholds))
    evaluators = {cls: _ClassEvaluator(frames, cls) for cls in labels}
    out = []
    for t in tolerances:
        cfg_t = replace(config, tolerance=ToleranceConfig(
            tolerance_pct=t, min_tolerance_m=config.tolerance.min_tolerance_m))
        tasks = [(cls, bin_range, aggregate)
                 for cls in labels for bin_range, aggregate in _bin_plan(cfg_t)]
        entries = _run_entries(evaluators, tasks, cfg_t, workers)
        out.append((t, MetricsReport(config=cfg_t, entries=entries)))
    return out
