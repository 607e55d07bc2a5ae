# tests/test_table_trends.py
"""Directional reproduction of the short/long/patched GT tables on 10k synthetic lanes."""
import time

import pytest

from eval.evaluate import EvalConfig, evaluate_dataset
from lanes.lane_core import make_grid
from synth.synth_gen import SynthConfig, generate_scene_set
from tools.gt_gen import generate_scene_gt

pytestmark = pytest.mark.slow

MS = (20, 10, 5)
CFG = EvalConfig()


def _scenes(preset):
    cfg = SynthConfig.from_preset(preset, seed=7, scenes=2500, lanes_per_scene=(4, 4))
    return cfg, {s.scene_id: s.lanes for s in generate_scene_set(cfg).scenes}


def _training_gt(scenes, m, mode):
    grid = make_grid(m, 3, 103)
    return {sid: generate_scene_gt(lanes, grid, mode)[0] for sid, lanes in scenes.items()}


@pytest.fixture(scope="module")
def trend_reports():
    start = time.perf_counter()
    reports = {}
    for preset in ("openlane-like", "apollosim-like"):
        _, scenes = _scenes(preset)
        for m in MS:
            for mode in ("short", "long"):
                pred = _training_gt(scenes, m, mode)
                reports[preset, m, mode] = (evaluate_dataset(scenes, pred, CFG),
                                            evaluate_dataset(scenes, pred, CFG.replace(lane_iou=0.9)))
    reports["seconds"] = time.perf_counter() - start
    return reports


@pytest.mark.parametrize("mode", ["short", "long"])
def test_f1_drops_with_fewer_preset_points(trend_reports, mode):
    f1 = [trend_reports["openlane-like", m, mode][0].f1 for m in MS]
    assert f1[0] > f1[1] > f1[2]


@pytest.mark.parametrize("m", MS)
def test_short_favours_precision_long_favours_recall(trend_reports, m):
    short = trend_reports["openlane-like", m, "short"][0]
    long_ = trend_reports["openlane-like", m, "long"][0]
    assert short.precision > short.recall
    assert long_.recall > long_.precision


@pytest.mark.parametrize("m", MS)
@pytest.mark.parametrize("mode", ["short", "long"])
def test_longer_lanes_score_higher(trend_reports, m, mode):
    assert trend_reports["apollosim-like", m, mode][0].f1 > trend_reports["openlane-like", m, mode][0].f1


def test_stricter_lane_iou_never_raises_f1(trend_reports):
    for key, value in trend_reports.items():
        if key == "seconds":
            continue
        at_075, at_090 = value
        assert at_090.f1 <= at_075.f1, key


def test_trend_runtime(trend_reports):
    # two presets; each preset's six runs stay within a minute
    assert trend_reports["seconds"] < 120.0


def test_patched_gt_nearly_saturates():
    start = time.perf_counter()
    synth_cfg, scenes = _scenes("openlane-like")
    cfg = CFG.replace(patch_single=True)
    for m, target in ((20, 0.995), (10, 0.97)):
        grid = make_grid(m, 3, 103)
        rep = evaluate_dataset(scenes, _training_gt(scenes, m, "patched"), cfg)
        assert rep.f1 >= target, (m, rep.f1)
        bound = 0.5 * synth_cfg.kappa_max * (grid.spacing / 2) ** 2
        for err in (rep.x_err_near, rep.x_err_far, rep.z_err_near, rep.z_err_far):
            assert 0.0 <= err <= bound
    assert time.perf_counter() - start < 60.0
