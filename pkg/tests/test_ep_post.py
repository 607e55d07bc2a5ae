# tests/test_ep_post.py
import numpy as np
import pytest

from lanes.errors import DimensionMismatch, NoOverlap, TooFewValid
from lanes.lane_core import PATCHED, TOO_FEW_VALID, make_grid
from synth.synth_gen import SynthConfig, generate_scene_set
from tools.ep_post import EpPrediction, ep_patch_inference, loss_ep, patch_single_point
from tools.gt_gen import generate_training_gt
from tests.helpers import curved_lane, straight_lane

GRID20 = make_grid(20, 3, 103)


def test_patch_moves_only_first_and_last_visible_points():
    lane = curved_lane(11.0, 71.0)
    gt = generate_training_gt(lane, GRID20, "patched")
    out = ep_patch_inference(gt, EpPrediction.from_lane(gt))
    first, last = gt.visible_span
    np.testing.assert_allclose(out.points[first], lane.start, atol=1e-12)
    np.testing.assert_allclose(out.points[last], lane.end, atol=1e-12)
    untouched = [i for i in range(20) if i not in (first, last)]
    np.testing.assert_array_equal(out.points[untouched], gt.points[untouched])
    assert out.has_flag(PATCHED)
    assert not gt.has_flag(PATCHED)


def test_zero_deltas_change_nothing():
    lane = straight_lane(10.0, 60.0)
    gt = generate_training_gt(lane, GRID20, "short")
    zeros = EpPrediction(np.zeros((20, 3)), np.zeros((20, 3)))
    out = ep_patch_inference(gt, zeros)
    np.testing.assert_array_equal(out.points, gt.points)


def test_too_few_valid_passes_through():
    lane = straight_lane(8.0, 9.0)
    gt = generate_training_gt(lane, GRID20, "patched")
    out = ep_patch_inference(gt, EpPrediction.from_lane(gt))
    np.testing.assert_array_equal(out.points, gt.points)
    assert out.has_flag(TOO_FEW_VALID)
    assert not out.has_flag(PATCHED)


def test_dimension_mismatch():
    lane = straight_lane(10.0, 60.0)
    gt = generate_training_gt(lane, GRID20, "short")
    with pytest.raises(DimensionMismatch):
        ep_patch_inference(gt, EpPrediction(np.zeros((10, 3)), np.zeros((10, 3))))
    with pytest.raises(DimensionMismatch):
        EpPrediction(np.zeros((10, 3)), np.zeros((9, 3)))
    with pytest.raises(DimensionMismatch):
        EpPrediction.from_lane(gt)


def test_single_point_patch_builds_two_point_lane():
    lane = straight_lane(7.5, 9.5, x=1.0, slope_z=0.1)
    gt = generate_training_gt(lane, GRID20, "patched")
    dense = patch_single_point(gt, EpPrediction.from_lane(gt))
    np.testing.assert_allclose(dense.points, [lane.start, lane.end], atol=1e-12)
    multi = generate_training_gt(straight_lane(10.0, 60.0), GRID20, "patched")
    with pytest.raises(TooFewValid):
        patch_single_point(multi, EpPrediction.from_lane(multi))


def test_round_trip_recovers_endpoints_for_synthetic_lanes():
    cfg = SynthConfig.from_preset("openlane-like", seed=3, scenes=2500, lanes_per_scene=(4, 4))
    lanes = generate_scene_set(cfg).lanes
    assert len(lanes) == 10_000
    checked = 0
    for lane in lanes:
        try:
            gt = generate_training_gt(lane, GRID20, "patched")
        except NoOverlap:
            continue
        if gt.n_visible < 2:
            continue
        out = ep_patch_inference(gt, EpPrediction.from_lane(gt))
        first, last = out.visible_span
        assert np.max(np.abs(out.points[first] - lane.start)) <= 1e-9
        assert np.max(np.abs(out.points[last] - lane.end)) <= 1e-9
        checked += 1
    assert checked > 9_000


def test_loss_matches_elementwise_oracle():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        m = int(rng.integers(2, 30))
        pred = EpPrediction(rng.normal(size=(m, 3)), rng.normal(size=(m, 3)))
        s, e = rng.normal(size=(m, 3)), rng.normal(size=(m, 3))
        total = 0.0
        for i in range(m):
            for k in range(3):
                total += abs(pred.s_hat[i, k] - s[i, k]) + abs(pred.e_hat[i, k] - e[i, k])
        oracle = total / m
        assert loss_ep(pred, (s, e)) == pytest.approx(oracle, rel=1e-12)


def test_loss_shape_mismatch():
    pred = EpPrediction(np.zeros((4, 3)), np.zeros((4, 3)))
    with pytest.raises(DimensionMismatch):
        loss_ep(pred, (np.zeros((5, 3)), np.zeros((5, 3))))
    assert loss_ep(pred, (np.zeros((4, 3)), np.ones((4, 3)))) == pytest.approx(3.0)


def test_patching_restores_a_twenty_metre_lane():
    pred = generate_training_gt(straight_lane(10.0, 30.0, x=1.0), GRID20, "short")
    np.testing.assert_allclose(pred.y[pred.vis][[0, -1]], [13.5263, 29.3158], atol=1e-4)
    s_hat, e_hat = np.zeros((20, 3)), np.zeros((20, 3))
    s_hat[2] = (0.0, -3.5263, 0.0)
    e_hat[5] = (0.0, 0.6842, 0.0)
    out = ep_patch_inference(pred, EpPrediction(s_hat, e_hat))
    assert out.y[2] == pytest.approx(10.0, abs=1e-4)
    assert out.y[5] == pytest.approx(30.0, abs=1e-4)
    np.testing.assert_array_equal(out.y[[3, 4]], pred.y[[3, 4]])
    np.testing.assert_array_equal(out.vis, pred.vis)
    np.testing.assert_array_equal(out.x, pred.x)
