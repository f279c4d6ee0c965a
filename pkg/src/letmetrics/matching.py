"""Per-frame bipartite matching between predictions and ground truths.

Weights follow the tolerant matching rule: a pair is eligible when its
longitudinal affinity is positive and its (LET-)IoU clears the class IoU
threshold, and eligible pairs are weighted by affinity times IoU. A baseline
weight rule using plain 3D IoU is provided for conventional AP.

Both matchers are deterministic. The Hungarian matcher returns, among all
maximum-total-weight assignments, the one whose sequence of matched
(pred_index, gt_index) pairs is lexicographically smallest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import fsum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Box3D, iou_3d
from .let import ToleranceConfig, affinity_from_error, let_iou, longitudinal_tolerance


@dataclass
class WeightMatrix:
    """Dense association weights, rows = predictions, columns = ground truths.

    Entries are in [0, 1]; an entry of 0 marks an ineligible pair. The
    optional companion matrices carry the affinity and IoU values used to
    build the weights, so match results can report them per pair.
    """

    weights: np.ndarray
    affinities: np.ndarray | None = None
    ious: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {w.shape}")
        if w.size and (np.min(w) < 0.0 or np.max(w) > 1.0):
            raise ValueError("weights must lie in [0, 1]")
        self.weights = w

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


@dataclass(frozen=True)
class MatchedPair:
    pred_index: int
    gt_index: int
    affinity: float
    iou: float
    weight: float


@dataclass
class FrameMatchResult:
    """Outcome of matching one frame: TP pairs plus unmatched FP/FN indices."""

    matches: list[MatchedPair]
    unmatched_preds: list[int] = field(default_factory=list)
    unmatched_gts: list[int] = field(default_factory=list)

    @property
    def total_weight(self) -> float:
        return fsum(m.weight for m in self.matches)


def gate_weights(affinities: np.ndarray, ious: np.ndarray, iou_threshold: float) -> np.ndarray:
    """Combine affinity and IoU into matching weights with threshold gating."""
    w = affinities * ious
    w[(affinities <= 0.0) | (ious <= iou_threshold)] = 0.0
    return w


def _check_threshold(iou_threshold: float):
    if not (0.0 < iou_threshold < 1.0):
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")


def let_weight_matrix(preds: list[Box3D], gts: list[Box3D], cfg: ToleranceConfig,
                      iou_threshold: float) -> WeightMatrix:
    """Tolerant weights: affinity x LET-IoU for pairs with positive affinity.

    LET-IoU is only evaluated for pairs whose affinity is positive; everything
    else is ineligible without touching the geometry.
    """
    _check_threshold(iou_threshold)
    n_p, n_g = len(preds), len(gts)
    aff = np.zeros((n_p, n_g))
    if n_p and n_g:
        p_centers = np.array([[b.center.x, b.center.y, b.center.z] for b in preds])
        g_centers = np.array([[b.center.x, b.center.y, b.center.z] for b in gts])
        g_ranges = np.linalg.norm(g_centers, axis=1)
        u_g = g_centers / g_ranges[:, None]
        e_lon = np.abs(p_centers @ u_g.T - g_ranges[None, :])
        tol = np.array([longitudinal_tolerance(r, cfg) for r in g_ranges])
        aff = affinity_from_error(e_lon, tol[None, :])
    ious = np.zeros((n_p, n_g))
    for i, j in zip(*np.nonzero(aff > 0.0)):
        ious[i, j] = let_iou(preds[i], gts[j])
    return WeightMatrix(gate_weights(aff, ious, iou_threshold), aff, ious)


def baseline_weight_matrix(preds: list[Box3D], gts: list[Box3D],
                           iou_threshold: float) -> WeightMatrix:
    """Conventional weights: plain 3D IoU, gated by the IoU threshold."""
    _check_threshold(iou_threshold)
    n_p, n_g = len(preds), len(gts)
    ious = np.zeros((n_p, n_g))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            ious[i, j] = iou_3d(p, g)
    aff = np.ones((n_p, n_g))
    return WeightMatrix(gate_weights(aff, ious, iou_threshold), aff, ious)


def _pairs_of(weights: np.ndarray) -> dict[int, int]:
    """One maximum-weight assignment as {row: col}, zero-weight pairs dropped."""
    if weights.size == 0 or not np.any(weights > 0.0):
        return {}
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return {int(i): int(j) for i, j in zip(rows, cols) if weights[i, j] > 0.0}


def _build_result(w: WeightMatrix, chosen: dict[int, int]) -> FrameMatchResult:
    n_p, n_g = w.shape
    matches = []
    for i in sorted(chosen):
        j = chosen[i]
        aff = float(w.affinities[i, j]) if w.affinities is not None else 1.0
        iou = float(w.ious[i, j]) if w.ious is not None else float(w.weights[i, j])
        matches.append(MatchedPair(i, j, aff, iou, float(w.weights[i, j])))
    used_g = set(chosen.values())
    return FrameMatchResult(
        matches=matches,
        unmatched_preds=[i for i in range(n_p) if i not in chosen],
        unmatched_gts=[j for j in range(n_g) if j not in used_g],
    )


def hungarian_match(w: WeightMatrix) -> FrameMatchResult:
    """Maximum-total-weight assignment with a lexicographic tie-break.

    Among assignments of equal total weight, the returned one minimizes the
    sequence of matched (pred_index, gt_index) pairs. Tie detection compares
    exactly-rounded sums (math.fsum), so ties between totals that are equal
    as real sums of the stored float weights are honored exactly.
    """
    W = w.weights
    n_p, n_g = W.shape
    witness = _pairs_of(W)
    if not witness:
        return _build_result(w, {})
    total = fsum(W[i, j] for i, j in witness.items())

    chosen: dict[int, int] = {}
    chosen_weights: list[float] = []
    used: set[int] = set()
    for i in range(n_p):
        wit_j = witness.get(i)
        pick = None
        for j in range(n_g):
            if j in used or W[i, j] <= 0.0:
                continue
            if j == wit_j:
                pick = j
                break
            # Would matching i to j still allow reaching the optimal total?
            sub_cols = [c for c in range(n_g) if c not in used and c != j]
            sub = W[np.ix_(range(i + 1, n_p), sub_cols)]
            sub_pairs = _pairs_of(sub)
            cand = fsum(chosen_weights + [W[i, j]] +
                        [sub[r, c] for r, c in sub_pairs.items()])
            if cand == total:
                pick = j
                witness = {i + 1 + r: sub_cols[c] for r, c in sub_pairs.items()}
                break
        if pick is None and wit_j is not None and wit_j not in used:
            pick = wit_j
        if pick is not None:
            chosen[i] = pick
            chosen_weights.append(W[i, pick])
            used.add(pick)
    return _build_result(w, chosen)


def greedy_match(w: WeightMatrix) -> FrameMatchResult:
    """Repeatedly take the largest remaining positive weight.

    Ties are broken toward the smaller (pred_index, gt_index) pair.
    """
    W = w.weights
    order = sorted(
        ((W[i, j], i, j) for i, j in zip(*np.nonzero(W > 0.0))),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    chosen: dict[int, int] = {}
    used: set[int] = set()
    for _, i, j in order:
        if i not in chosen and j not in used:
            chosen[int(i)] = int(j)
            used.add(int(j))
    return _build_result(w, chosen)


def match(w: WeightMatrix, matcher: str = "hungarian") -> FrameMatchResult:
    """Dispatch to a matcher by name ("hungarian" or "greedy")."""
    if matcher == "hungarian":
        return hungarian_match(w)
    if matcher == "greedy":
        return greedy_match(w)
    raise ValueError(f"unknown matcher {matcher!r}")
