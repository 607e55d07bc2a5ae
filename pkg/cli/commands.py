# cli/commands.py
"""
Pipeline steps shared by the command line and experiment manifests.

Each step reads and writes JSONL/JSON files and returns a small summary dict.
Bad lanes inside a batch are logged and skipped; configuration problems raise.
"""

from __future__ import annotations

import time
from typing import Dict, List, Optional, Sequence

import numpy as np

from attention.flops import BLOCKS, flop_estimate
from attention.pl_attention import (
    AttentionWeights,
    FeatureTensor,
    PlWeights,
    multi_head_attention,
    pl_attention_forward,
)
from eval.evaluate import EvalConfig, evaluate_dataset, lane_iou_sweep, length_bucket_scores, parse_buckets
from lanes.errors import InvalidConfig, LanePatchError, TooFewValid
from lanes.lane_core import PATCHED, TOO_FEW_VALID, DenseLane, SparseLane
from store.lane_store import (
    lane_to_record,
    read_json,
    read_jsonl,
    record_to_dense,
    record_to_lane,
    write_json,
    write_jsonl,
)
from synth.synth_gen import SynthConfig, generate_scene_set
from tools.ep_post import EpPrediction, ep_patch_inference, patch_single_point
from tools.gt_gen import GtMode, generate_scene_gt, grid_from_options


def _log(logger, level, payload):
    if logger:
        getattr(logger, level)(payload)


def parse_floats(text: Optional[str]) -> Optional[List[float]]:
    if text is None or text == "":
        return None
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError:
        raise InvalidConfig(f"expected comma-separated numbers, got {text!r}") from None


def parse_labels(items: Optional[Sequence[str]]) -> Dict[str, object]:
    """['mode=short', 'm=20'] -> {'mode': 'short', 'm': 20}"""
    labels = {}
    for item in items or []:
        key, sep, value = str(item).partition("=")
        if not sep or not key:
            raise InvalidConfig(f"label must look like key=value, got {item!r}")
        labels[key] = int(value) if value.lstrip("-").isdigit() else value
    return labels


# -----------------------
# synth
# -----------------------
def run_synth(out: str, preset: Optional[str] = "openlane-like", seed: Optional[int] = None,
              scenes: Optional[int] = None, config: Optional[dict] = None, config_path: Optional[str] = None,
              threads: int = 1, logger=None) -> dict:
    data = dict(read_json(config_path)) if config_path else {}
    data.update(config or {})
    if seed is not None:
        data["seed"] = seed
    if scenes is not None:
        data["scenes"] = scenes
    try:
        cfg = SynthConfig.from_dict(data, preset=preset)
    except TypeError as exc:
        raise InvalidConfig(f"bad synth config: {exc}") from None
    scene_set = generate_scene_set(cfg, threads=threads, logger=logger)
    records = scene_set.to_records()
    write_jsonl(out, records)
    return {"step": "synth", "out": out, "seed": cfg.seed, "scenes": len(scene_set.scenes), "lanes": len(records)}


# -----------------------
# gen-gt
# -----------------------
def run_gen_gt(input_path: str, out: str, mode: str, m: int, range_text: str = "3:103",
               grid_values: Optional[Sequence[float]] = None, logger=None) -> dict:
    mode = GtMode.parse(mode)
    grid = grid_from_options(m, range_text, grid_values)
    scenes: Dict[str, List[DenseLane]] = {}
    invalid = []
    for rec in read_jsonl(input_path):
        try:
            lane = record_to_dense(rec)
        except LanePatchError as exc:
            invalid.append(rec.get("lane_id"))
            _log(logger, "error", {"component": "gen_gt", "action": "skip_invalid",
                                   "lane_id": rec.get("lane_id"), "error": str(exc)})
            continue
        scenes.setdefault(str(rec.get("scene_id", "")), []).append(lane)

    records, skipped = [], []
    for scene_id, lanes in scenes.items():
        sparse, missed = generate_scene_gt(lanes, grid, mode, logger=logger)
        skipped.extend(missed)
        records.extend(lane_to_record(lane, scene_id) for lane in sparse)
    write_jsonl(out, records)
    summary = {"step": "gen-gt", "out": out, "mode": mode.value, "m": grid.m,
               "written": len(records), "skipped_no_overlap": len(skipped), "invalid": len(invalid)}
    _log(logger, "info", {"component": "gen_gt", "action": "done", **summary})
    return summary


# -----------------------
# ep-infer
# -----------------------
def _infer_one(lane: SparseLane, patch_single: bool, logger=None):
    if not lane.has_patch or lane.has_flag(PATCHED):
        return lane
    ep = EpPrediction.from_lane(lane)
    if patch_single and lane.n_visible == 1:
        try:
            return patch_single_point(lane, ep)
        except TooFewValid as exc:
            _log(logger, "warning", {"component": "ep_post", "action": "single_point_failed",
                                     "lane_id": lane.lane_id, "error": str(exc)})
            return lane.with_flags(TOO_FEW_VALID)
    return ep_patch_inference(lane, ep, logger=logger)


def run_ep_infer(input_path: str, out: str, patch_single: bool = False, logger=None) -> dict:
    records = []
    counts = {"patched": 0, "single_point": 0, "too_few_valid": 0, "passed_through": 0, "invalid": 0}
    for rec in read_jsonl(input_path):
        scene_id = str(rec.get("scene_id", ""))
        try:
            lane = record_to_lane(rec, repair=True, logger=logger)
            result = lane if isinstance(lane, DenseLane) else _infer_one(lane, patch_single, logger)
        except LanePatchError as exc:
            counts["invalid"] += 1
            _log(logger, "error", {"component": "ep_post", "action": "skip_invalid",
                                   "lane_id": rec.get("lane_id"), "error": str(exc)})
            continue
        if isinstance(result, DenseLane) and not isinstance(lane, DenseLane):
            counts["single_point"] += 1
        elif isinstance(result, SparseLane) and result.has_flag(TOO_FEW_VALID):
            counts["too_few_valid"] += 1
        elif result is not lane:
            counts["patched"] += 1
        else:
            counts["passed_through"] += 1
        records.append(lane_to_record(result, scene_id))
    write_jsonl(out, records)
    return {"step": "ep-infer", "out": out, **counts}


# -----------------------
# eval
# -----------------------
def _load_tolerant(path: str, repair: bool, logger=None):
    scenes, invalid = {}, 0
    for rec in read_jsonl(path):
        try:
            lane = record_to_lane(rec, repair=repair, logger=logger)
        except LanePatchError as exc:
            invalid += 1
            _log(logger, "error", {"component": "eval", "action": "skip_invalid",
                                   "lane_id": rec.get("lane_id"), "error": str(exc)})
            continue
        scenes.setdefault(str(rec.get("scene_id", "")), []).append(lane)
    return scenes, invalid


def build_eval_config(eval_step: Optional[float] = None, threshold: float = 1.5, lane_iou: float = 0.75,
                      patch_single: bool = False, tp_rule: str = "per_side") -> EvalConfig:
    opts = dict(point_match_threshold=threshold, lane_iou=lane_iou, patch_single=patch_single, tp_rule=tp_rule)
    if eval_step:
        return EvalConfig.with_step(eval_step, **opts)
    return EvalConfig(**opts)


def run_eval(gt_path: str, pred_path: str, out: Optional[str] = None, cfg: Optional[EvalConfig] = None,
             labels: Optional[dict] = None, iou_sweep: Optional[Sequence[float]] = None,
             buckets: Optional[str] = None, diagnostics: bool = False, threads: int = 1, logger=None) -> dict:
    cfg = cfg or EvalConfig()
    gt, gt_invalid = _load_tolerant(gt_path, repair=False, logger=logger)
    pred, pred_invalid = _load_tolerant(pred_path, repair=True, logger=logger)
    report = evaluate_dataset(gt, pred, cfg, threads=threads, logger=logger)

    result = {
        "labels": dict(labels or {}),
        "metrics": report.to_dict(diagnostics=diagnostics),
        "config": {
            "point_match_threshold": cfg.point_match_threshold,
            "lane_iou": cfg.lane_iou,
            "near_far_split": cfg.near_far_split,
            "eval_points": int(cfg.eval_y_values.size),
            "patch_single": cfg.patch_single,
            "tp_rule": cfg.tp_rule,
        },
        "invalid_records": {"gt": gt_invalid, "pred": pred_invalid},
    }
    if iou_sweep:
        result["iou_sweep"] = lane_iou_sweep(gt, pred, cfg, iou_sweep, threads=threads)
    if buckets:
        result["length_buckets"] = length_bucket_scores(report, parse_buckets(buckets))
    if out:
        write_json(out, result)
    return result


# -----------------------
# attn-bench
# -----------------------
def run_attn_bench(n: int = 40, m: int = 30, c: int = 256, heads: int = 4, seed: int = 0,
                   repeat: int = 1) -> dict:
    """FLOP counts for PLA vs MSA plus wall-clock time of one forward pass of each."""
    pla = flop_estimate("PLA", n, m, c, heads)
    msa = flop_estimate("MSA", n, m, c, heads)

    rng = np.random.default_rng(seed)
    weights = PlWeights.init(c, heads, seed)
    feat = FeatureTensor.from_points(rng.standard_normal((n, m, c)), weights.cls_token)
    msa_layers = [AttentionWeights.init(c, heads, seed + 1 + i) for i in range(BLOCKS)]

    def msa_forward():
        tokens = feat.data.reshape(n * (m + 1), c)
        for w in msa_layers:
            tokens = multi_head_attention(tokens, w)
        return tokens

    def timed(fn):
        start = time.perf_counter()
        for _ in range(repeat):
            fn()
        return (time.perf_counter() - start) / repeat

    pla_s = timed(lambda: pl_attention_forward(feat, weights))
    msa_s = timed(msa_forward)
    return {
        "convention": f"MACs; MSA baseline is {BLOCKS} full layers, one per PLA block; projections "
                      "4*C^2 per token per block; score and weighted sum C per (query, key) pair; "
                      "softmax counted separately",
        "pla": pla.to_dict(),
        "msa": msa.to_dict(),
        "attention_ratio": msa.attention_macs / pla.attention_macs,
        "total_ratio": msa.total / pla.total,
        "seconds": {"pla": pla_s, "msa": msa_s},
    }
