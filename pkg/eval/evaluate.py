# eval/evaluate.py
"""
OpenLane-style 3D lane evaluation.

Both sides are resampled at a fixed set of y values (3..103 m, 1 m apart by
default). A y position is point-matched when both lanes cover it and their
x-z distance is within the threshold. Lanes are paired by an optimal
assignment that maximises the total number of matched points; a pair counts
towards recall when its matched fraction of the GT lane reaches Lane-IoU and
towards precision when its matched fraction of the prediction does. Pairs
passing on both sides are the true positives that X/Z errors and category
accuracy are measured over.

Counts are additive (EvalCounts), so scene reports can be merged in any
order without averaging averages.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from lanes.errors import InvalidConfig, TooFewValid
from lanes.lane_core import PATCHED, DenseLane, SparseLane, lane_length, sample, to_dense
from tools.ep_post import EpPrediction, ep_patch_inference, patch_single_point

Lane = Union[DenseLane, SparseLane]
TP_RULES = ("per_side", "both")


def default_eval_y() -> np.ndarray:
    return np.arange(3.0, 104.0, 1.0)


@dataclass
class EvalConfig:
    eval_y_values: np.ndarray = field(default_factory=default_eval_y)
    point_match_threshold: float = 1.5
    lane_iou: float = 0.75
    near_far_split: float = 40.0
    patch_single: bool = False
    # "per_side": GT-side ratio drives recall, prediction-side ratio drives precision.
    # "both": a pair counts on either side only when both ratios pass.
    tp_rule: str = "per_side"

    def __post_init__(self):
        ys = np.asarray(self.eval_y_values, dtype=float)
        if ys.ndim != 1 or ys.size == 0 or np.any(np.diff(ys) <= 0):
            raise InvalidConfig("eval_y_values must be a non-empty ascending 1-D sequence")
        if not self.point_match_threshold > 0:
            raise InvalidConfig(f"point_match_threshold must be > 0, got {self.point_match_threshold}")
        if not 0 < self.lane_iou <= 1:
            raise InvalidConfig(f"lane_iou must be in (0, 1], got {self.lane_iou}")
        if not self.near_far_split > 0:
            raise InvalidConfig(f"near_far_split must be > 0, got {self.near_far_split}")
        if self.tp_rule not in TP_RULES:
            raise InvalidConfig(f"tp_rule must be one of {TP_RULES}, got {self.tp_rule!r}")
        self.eval_y_values = ys

    @classmethod
    def with_step(cls, step: float, start: float = 3.0, end: float = 103.0, **kwargs) -> "EvalConfig":
        if not step > 0:
            raise InvalidConfig(f"eval step must be > 0, got {step}")
        count = int(round((end - start) / step)) + 1
        return cls(eval_y_values=np.linspace(start, end, count), **kwargs)

    def replace(self, **changes) -> "EvalConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class LaneSamples:
    xs: np.ndarray
    zs: np.ndarray
    covered: np.ndarray
    length: float
    category: int = 0
    lane_id: str = ""

    @property
    def n_covered(self) -> int:
        return int(self.covered.sum())


# -----------------------
# Resampling
# -----------------------
def as_dense(lane: Lane, cfg: EvalConfig) -> DenseLane:
    """Dense polyline for evaluation; sparse lanes carrying deltas get patched first."""
    if isinstance(lane, DenseLane):
        return lane
    if lane.has_patch and not lane.has_flag(PATCHED):
        ep = EpPrediction.from_lane(lane)
        if lane.n_visible == 1 and cfg.patch_single:
            return patch_single_point(lane, ep)
        lane = ep_patch_inference(lane, ep)
    return to_dense(lane)


def _samples_from_dense(dense: DenseLane, cfg: EvalConfig) -> LaneSamples:
    ys = cfg.eval_y_values
    covered = (ys >= dense.y_min) & (ys <= dense.y_max)
    xs = np.zeros_like(ys)
    zs = np.zeros_like(ys)
    if covered.any():
        xs[covered], zs[covered] = sample(dense, ys[covered])
    return LaneSamples(xs, zs, covered, lane_length(dense), dense.category, dense.lane_id)


def resample_for_eval(lane: Lane, cfg: EvalConfig) -> LaneSamples:
    """
    Samples of ``lane`` at every eval y. Positions outside the lane extent are
    uncovered. A sparse lane without a usable polyline covers nothing.
    """
    try:
        dense = as_dense(lane, cfg)
    except TooFewValid:
        ys = cfg.eval_y_values
        return LaneSamples(np.zeros_like(ys), np.zeros_like(ys), np.zeros(ys.shape, dtype=bool),
                           0.0, lane.category, lane.lane_id)
    return _samples_from_dense(dense, cfg)


# -----------------------
# Point matching
# -----------------------
def _match_mask(gx, gz, gc, px, pz, pc, threshold: float) -> np.ndarray:
    dist = np.hypot(gx - px, gz - pz)
    return gc & pc & (dist <= threshold)


def pair_score(gt: LaneSamples, pred: LaneSamples, cfg: EvalConfig) -> Tuple[int, int, int]:
    """(matched_count, gt_covered, pred_covered) for one GT/prediction pair."""
    matched = _match_mask(gt.xs, gt.zs, gt.covered, pred.xs, pred.zs, pred.covered,
                          cfg.point_match_threshold)
    return int(matched.sum()), gt.n_covered, pred.n_covered


# -----------------------
# Reports
# -----------------------
@dataclass
class EvalCounts:
    n_gt: int = 0
    n_pred: int = 0
    n_pred_skipped: int = 0
    gt_matched: int = 0
    pred_matched: int = 0
    tp: int = 0
    matched_points: int = 0
    category_matches: int = 0
    near_points: int = 0
    far_points: int = 0
    x_near_sum: float = 0.0
    x_far_sum: float = 0.0
    z_near_sum: float = 0.0
    z_far_sum: float = 0.0

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(**{f.name: getattr(self, f.name) + getattr(other, f.name)
                             for f in dataclasses.fields(self)})


def _ratio(num: float, den: float, fallback: float = 0.0) -> float:
    return num / den if den else fallback


@dataclass
class EvalReport:
    recall: float
    precision: float
    f1: float
    f1_harmonic: float
    f1_arith: float
    x_err_near: float
    x_err_far: float
    z_err_near: float
    z_err_far: float
    category_accuracy: float
    matched_points: int
    counts: EvalCounts
    flags: List[str] = field(default_factory=list)
    per_lane_matches: List[dict] = field(default_factory=list)
    # (length, matched) for every evaluated GT lane / prediction
    gt_outcomes: List[Tuple[float, bool]] = field(default_factory=list)
    pred_outcomes: List[Tuple[float, bool]] = field(default_factory=list)

    @classmethod
    def from_counts(cls, counts: EvalCounts, per_lane_matches=None, gt_outcomes=None, pred_outcomes=None):
        flags = []
        if counts.n_gt:
            recall = counts.gt_matched / counts.n_gt
        else:
            recall = 1.0
            flags.append("no_gt")
        if counts.n_pred:
            precision = counts.pred_matched / counts.n_pred
        else:
            precision = 1.0
            flags.append("no_pred")
        f1_h = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(
            recall=recall,
            precision=precision,
            f1=f1_h,
            f1_harmonic=f1_h,
            f1_arith=(precision + recall) / 2,
            x_err_near=_ratio(counts.x_near_sum, counts.near_points),
            x_err_far=_ratio(counts.x_far_sum, counts.far_points),
            z_err_near=_ratio(counts.z_near_sum, counts.near_points),
            z_err_far=_ratio(counts.z_far_sum, counts.far_points),
            category_accuracy=_ratio(counts.category_matches, counts.tp),
            matched_points=counts.matched_points,
            counts=counts,
            flags=flags,
            per_lane_matches=list(per_lane_matches or []),
            gt_outcomes=list(gt_outcomes or []),
            pred_outcomes=list(pred_outcomes or []),
        )

    def to_dict(self, diagnostics: bool = False) -> dict:
        out = {
            "recall": self.recall,
            "precision": self.precision,
            "f1": self.f1,
            "f1_harmonic": self.f1_harmonic,
            "f1_arith": self.f1_arith,
            "x_err_near": self.x_err_near,
            "x_err_far": self.x_err_far,
            "z_err_near": self.z_err_near,
            "z_err_far": self.z_err_far,
            "category_accuracy": self.category_accuracy,
            "matched_points": self.matched_points,
            "counts": dataclasses.asdict(self.counts),
            "flags": list(self.flags),
        }
        if diagnostics:
            out["per_lane_matches"] = list(self.per_lane_matches)
        return out


def merge_reports(reports: Sequence[EvalReport]) -> EvalReport:
    counts = EvalCounts()
    matches, gt_out, pred_out = [], [], []
    for r in reports:
        counts = counts + r.counts
        matches.extend(r.per_lane_matches)
        gt_out.extend(r.gt_outcomes)
        pred_out.extend(r.pred_outcomes)
    return EvalReport.from_counts(counts, matches, gt_out, pred_out)


# -----------------------
# Scene evaluation
# -----------------------
def evaluate_scene(gt_lanes: Sequence[Lane], pred_lanes: Sequence[Lane], cfg: EvalConfig,
                   scene_id: str = "") -> EvalReport:
    gts = [resample_for_eval(lane, cfg) for lane in gt_lanes]
    preds = []
    skipped = 0
    for lane in pred_lanes:
        smp = resample_for_eval(lane, cfg)
        # predictions without a polyline are dropped, as in post-processing
        if smp.length <= 0:
            skipped += 1
            continue
        preds.append(smp)

    counts = EvalCounts(n_gt=len(gts), n_pred=len(preds), n_pred_skipped=skipped)
    gt_hit = [False] * len(gts)
    pred_hit = [False] * len(preds)
    matches = []

    if gts and preds:
        ys = cfg.eval_y_values
        gx = np.stack([g.xs for g in gts])[:, None, :]
        gz = np.stack([g.zs for g in gts])[:, None, :]
        gc = np.stack([g.covered for g in gts])[:, None, :]
        px = np.stack([p.xs for p in preds])[None, :, :]
        pz = np.stack([p.zs for p in preds])[None, :, :]
        pc = np.stack([p.covered for p in preds])[None, :, :]
        mask = _match_mask(gx, gz, gc, px, pz, pc, cfg.point_match_threshold)
        matched = mask.sum(axis=-1)

        rows, cols = linear_sum_assignment(matched, maximize=True)
        near = ys < cfg.near_far_split
        for r, c in zip(rows, cols):
            m = int(matched[r, c])
            g, p = gts[r], preds[c]
            counts.matched_points += m
            # m > 0 implies both coverages are non-zero
            gt_ok = m > 0 and m / g.n_covered >= cfg.lane_iou
            pred_ok = m > 0 and m / p.n_covered >= cfg.lane_iou
            is_tp = gt_ok and pred_ok
            if cfg.tp_rule == "both":
                gt_ok = pred_ok = is_tp
            matches.append({
                "scene_id": scene_id, "gt_id": g.lane_id, "pred_id": p.lane_id,
                "matched": m, "gt_covered": g.n_covered, "pred_covered": p.n_covered,
                "gt_matched": gt_ok, "pred_matched": pred_ok, "tp": is_tp,
            })
            gt_hit[r] = gt_ok
            pred_hit[c] = pred_ok
            counts.gt_matched += int(gt_ok)
            counts.pred_matched += int(pred_ok)
            if not is_tp:
                continue
            counts.tp += 1
            counts.category_matches += int(g.category == p.category)
            pm = mask[r, c]
            dx = np.abs(g.xs - p.xs)
            dz = np.abs(g.zs - p.zs)
            counts.near_points += int((pm & near).sum())
            counts.far_points += int((pm & ~near).sum())
            counts.x_near_sum += float(dx[pm & near].sum())
            counts.x_far_sum += float(dx[pm & ~near].sum())
            counts.z_near_sum += float(dz[pm & near].sum())
            counts.z_far_sum += float(dz[pm & ~near].sum())

    return EvalReport.from_counts(
        counts,
        matches,
        [(g.length, hit) for g, hit in zip(gts, gt_hit)],
        [(p.length, hit) for p, hit in zip(preds, pred_hit)],
    )


def evaluate_dataset(gt_scenes: Dict[str, Sequence[Lane]], pred_scenes: Dict[str, Sequence[Lane]],
                     cfg: EvalConfig, threads: int = 1, logger=None) -> EvalReport:
    """Evaluate every scene present on either side and merge the counts."""
    scene_ids = list(gt_scenes) + [sid for sid in pred_scenes if sid not in gt_scenes]

    def one(sid):
        return evaluate_scene(gt_scenes.get(sid, []), pred_scenes.get(sid, []), cfg, scene_id=sid)

    if threads > 1 and len(scene_ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, scene_ids))
    else:
        reports = [one(sid) for sid in scene_ids]
    merged = merge_reports(reports)
    if logger:
        logger.info({"component": "eval", "action": "evaluate_dataset", "scenes": len(scene_ids),
                     "n_gt": merged.counts.n_gt, "n_pred": merged.counts.n_pred,
                     "tp": merged.counts.tp, "f1": merged.f1})
    return merged


# -----------------------
# Analyses
# -----------------------
def parse_buckets(text: str) -> List[Tuple[float, float]]:
    """'0:20,20:40,40:103' -> [(0, 20), (20, 40), (40, 103)]"""
    buckets = []
    for part in str(text).split(","):
        try:
            lo, hi = (float(v) for v in part.split(":"))
        except ValueError:
            raise InvalidConfig(f"bucket must look like LO:HI, got {part!r}") from None
        if not hi > lo:
            raise InvalidConfig(f"bucket {part!r} is empty")
        buckets.append((lo, hi))
    return buckets


def _in_bucket(length: float, lo: float, hi: float, last: bool) -> bool:
    return lo <= length < hi or (last and length == hi)


def length_bucket_scores(report: EvalReport, buckets: Sequence[Tuple[float, float]]) -> List[dict]:
    """
    Recall over GT lanes bucketed by GT length, precision over predictions
    bucketed by their own length.
    """
    rows = []
    for i, (lo, hi) in enumerate(buckets):
        last = i == len(buckets) - 1
        gts = [tp for length, tp in report.gt_outcomes if _in_bucket(length, lo, hi, last)]
        preds = [tp for length, tp in report.pred_outcomes if _in_bucket(length, lo, hi, last)]
        recall = _ratio(sum(gts), len(gts), 1.0)
        precision = _ratio(sum(preds), len(preds), 1.0)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        rows.append({"bucket": f"{lo:g}:{hi:g}", "n_gt": len(gts), "n_pred": len(preds),
                     "recall": recall, "precision": precision, "f1": f1})
    return rows


def lane_iou_sweep(gt_scenes, pred_scenes, cfg: EvalConfig, thresholds: Sequence[float],
                   threads: int = 1) -> List[dict]:
    rows = []
    for thr in thresholds:
        rep = evaluate_dataset(gt_scenes, pred_scenes, cfg.replace(lane_iou=float(thr)), threads=threads)
        rows.append({"lane_iou": float(thr), "recall": rep.recall, "precision": rep.precision, "f1": rep.f1})
    return rows


def truncation_bound(length: float, loss: float, lane_iou: float = 0.75) -> bool:
    """True when a lane of ``length`` that lost ``loss`` metres fails the Lane-IoU test."""
    if not length > 0:
        raise InvalidConfig(f"length must be > 0, got {length}")
    if not 0 <= loss <= length:
        raise InvalidConfig(f"loss must lie in [0, {length}], got {loss}")
    return (length - loss) / length < lane_iou
